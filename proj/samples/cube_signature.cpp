// Laplacian eigenbasis of a unit cube and the signature of a few interior points.

#include "bodyfit/bodyfit.hpp"

#include <iostream>
#include <numbers>

int main() {
  const bodyfit::TetMesh mesh = bodyfit::unit_cube_mesh(8);
  const bodyfit::TetEigenbasis basis = bodyfit::eigenbasis(mesh, 8);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  std::cout << "eigenvalues / pi^2:";
  for (int i = 0; i < basis.eigenvalues.size(); ++i) std::cout << " " << basis.eigenvalues(i) / pi2;
  std::cout << "\n";

  const bodyfit::SignatureField field(basis);
  for (const Eigen::Vector3d p : {Eigen::Vector3d(0.1, 0.5, 0.5), Eigen::Vector3d(0.9, 0.5, 0.5)}) {
    std::cout << "gps(" << p.transpose() << ") = " << field(p).transpose() << "\n";
  }
}
