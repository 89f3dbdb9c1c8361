#pragma once

#include "bodyfit/io/encoding.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>

namespace bodyfit::io {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "array containers assume a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, double>) {
    return "float64";
  } else if constexpr (std::is_same_v<T, float>) {
    return "float32";
  } else {
    static_assert(std::is_same_v<T, std::int32_t>, "unsupported array element type");
    return "int32";
  }
}

/// {"dtype", "shape", "data"} with data the base64 of the raw little-endian elements.
template <typename T>
json encode_array(std::span<const T> values, const std::vector<std::int64_t>& shape) {
  const auto count = std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
  require(count == static_cast<std::int64_t>(values.size()), ErrorKind::Dimension, "array shape does not match data");
  const std::string_view bytes(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(T));
  return json{{"dtype", dtype_name<T>()}, {"shape", shape}, {"data", base64_encode(bytes)}};
}

template <typename T>
struct Array {
  std::vector<std::int64_t> shape;
  std::vector<T> values;
};

namespace detail {

template <typename Stored, typename T>
std::vector<T> convert_bytes(const std::string& bytes, std::size_t count) {
  require(bytes.size() == count * sizeof(Stored), ErrorKind::Parse, "array byte length does not match its shape");
  std::vector<Stored> raw(count);
  if (count > 0) {
    std::memcpy(raw.data(), bytes.data(), bytes.size());
  }
  return std::vector<T>(raw.begin(), raw.end());
}

}  // namespace detail

/// Decodes an array field into element type T. Floating arrays of either width decode
/// into float or double; int32 arrays decode into any T.
template <typename T>
Array<T> decode_array(const json& j, const std::string& name) {
  try {
    Array<T> out;
    const auto dtype = j.at("dtype").get<std::string>();
    out.shape = j.at("shape").get<std::vector<std::int64_t>>();
    std::size_t count = 1;
    for (auto d : out.shape) {
      require(d >= 0, ErrorKind::Parse, "negative dimension");
      count *= static_cast<std::size_t>(d);
    }
    const std::string bytes = base64_decode(j.at("data").get<std::string>());
    if (dtype == "float64") {
      require(!std::is_integral_v<T>, ErrorKind::Parse, "expected an integer array");
      out.values = detail::convert_bytes<double, T>(bytes, count);
    } else if (dtype == "float32") {
      require(!std::is_integral_v<T>, ErrorKind::Parse, "expected an integer array");
      out.values = detail::convert_bytes<float, T>(bytes, count);
    } else if (dtype == "int32") {
      out.values = detail::convert_bytes<std::int32_t, T>(bytes, count);
    } else {
      throw Error(ErrorKind::Parse, "unknown dtype '" + dtype + "'");
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, "array '" + name + "': " + e.what());
  } catch (const Error& e) {
    throw Error(e.kind(), "array '" + name + "': " + e.what());
  }
}

inline void expect_shape(const std::vector<std::int64_t>& shape, const std::vector<std::int64_t>& expected,
                         const std::string& name) {
  bool ok = shape.size() == expected.size();
  for (std::size_t i = 0; ok && i < shape.size(); ++i) {
    ok = expected[i] < 0 || expected[i] == shape[i];
  }
  if (!ok) {
    std::string got;
    for (auto d : shape) got += (got.empty() ? "" : ",") + std::to_string(d);
    std::string want;
    for (auto d : expected) want += (want.empty() ? "" : ",") + (d < 0 ? std::string("*") : std::to_string(d));
    throw Error(ErrorKind::Dimension, "array '" + name + "' has shape [" + got + "], expected [" + want + "]");
  }
}

inline const json& field(const json& j, const std::string& name) {
  if (!j.is_object() || !j.contains(name)) {
    throw Error(ErrorKind::Parse, "missing field '" + name + "'");
  }
  return j.at(name);
}

// Eigen conveniences. Row-major storage maps directly onto the C-order shapes.

template <typename Derived>
json encode_matrix(const Eigen::DenseBase<Derived>& m) {
  const RowMatrix rm = m.template cast<double>();
  return encode_array<double>(std::span(rm.data(), static_cast<std::size_t>(rm.size())), {rm.rows(), rm.cols()});
}

inline json encode_vector(const Eigen::VectorXd& v) {
  return encode_array<double>(std::span(v.data(), static_cast<std::size_t>(v.size())), {v.size()});
}

inline json encode_indices(const std::vector<int>& v) {
  const std::vector<std::int32_t> data(v.begin(), v.end());
  return encode_array<std::int32_t>(data, {static_cast<std::int64_t>(data.size())});
}

inline RowMatrix decode_matrix(const json& j, const std::string& name, std::int64_t rows = -1, std::int64_t cols = -1) {
  auto a = decode_array<double>(field(j, name), name);
  expect_shape(a.shape, {rows, cols}, name);
  return Eigen::Map<const RowMatrix>(a.values.data(), a.shape[0], a.shape[1]);
}

inline Points decode_points(const json& j, const std::string& name, std::int64_t rows = -1) {
  return decode_matrix(j, name, rows, 3);
}

inline Eigen::VectorXd decode_vector(const json& j, const std::string& name, std::int64_t size = -1) {
  auto a = decode_array<double>(field(j, name), name);
  expect_shape(a.shape, {size}, name);
  return Eigen::Map<const Eigen::VectorXd>(a.values.data(), a.shape[0]);
}

inline std::vector<int> decode_indices(const json& j, const std::string& name, std::int64_t size = -1) {
  auto a = decode_array<std::int64_t>(field(j, name), name);
  expect_shape(a.shape, {size}, name);
  return {a.values.begin(), a.values.end()};
}

inline json encode_rotations(const Rotations& rotations) {
  std::vector<double> data;
  data.reserve(rotations.size() * 9);
  for (const auto& r : rotations) {
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 3; ++c) {
        data.push_back(r(i, c));
      }
    }
  }
  return encode_array<double>(data, {static_cast<std::int64_t>(rotations.size()), 3, 3});
}

inline Rotations decode_rotations(const json& j, const std::string& name, std::int64_t count = -1) {
  auto a = decode_array<double>(field(j, name), name);
  expect_shape(a.shape, {count, 3, 3}, name);
  Rotations out(static_cast<std::size_t>(a.shape[0]));
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(a.values.data() + 9 * k);
  }
  return out;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, what + ": " + e.what());
  }
}

}  // namespace bodyfit::io
