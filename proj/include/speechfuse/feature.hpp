#pragma once

// Schema-tagged dense vectors and matrices, so concatenations stay auditable.

#include "speechfuse/common.hpp"

#include <algorithm>

namespace speechfuse {

struct SchemaBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const SchemaBlock&) const = default;
};

class FeatureVector {
 public:
  FeatureVector() = default;

  // Single-block vector.
  FeatureVector(std::string name, Vec values) : values_(std::move(values)) {
    schema_.push_back({std::move(name), 0, static_cast<std::size_t>(values_.size())});
  }

  const Vec& values() const { return values_; }
  const std::vector<SchemaBlock>& schema() const { return schema_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  void append(const std::string& name, const Vec& block) {
    if (has_block(name)) throw ConfigError("duplicate feature block '" + name + "'");
    const std::size_t off = size();
    values_.conservativeResize(static_cast<Eigen::Index>(off + block.size()));
    values_.segment(static_cast<Eigen::Index>(off), block.size()) = block;
    schema_.push_back({name, off, static_cast<std::size_t>(block.size())});
  }

  bool has_block(std::string_view name) const {
    return std::any_of(schema_.begin(), schema_.end(), [&](const auto& b) { return b.name == name; });
  }

  const SchemaBlock& block(std::string_view name) const {
    for (const auto& b : schema_) {
      if (b.name == name) return b;
    }
    throw std::out_of_range("no feature block '" + std::string(name) + "'");
  }

  Vec slice(std::string_view name) const {
    const auto& b = block(name);
    return values_.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.length));
  }

  // Schema lengths sum to the array length with contiguous offsets.
  bool schema_consistent() const {
    std::size_t off = 0;
    for (const auto& b : schema_) {
      if (b.offset != off) return false;
      off += b.length;
    }
    return off == size();
  }

  std::string schema_string() const {
    std::string s;
    for (const auto& b : schema_) {
      if (!s.empty()) s += ";";
      s += b.name + ":" + std::to_string(b.offset) + ":" + std::to_string(b.length);
    }
    return s;
  }

 private:
  Vec values_;
  std::vector<SchemaBlock> schema_;
};

// Builds a vector from (name, block, expected dim) triples; a dimension
// mismatch names the offending block.
struct BlockSpec {
  std::string name;
  const Vec* values;
  std::size_t expected_dim;  // 0 = any
};

inline FeatureVector concat_blocks(std::initializer_list<BlockSpec> blocks) {
  FeatureVector fv;
  for (const auto& b : blocks) {
    if (b.expected_dim != 0 && static_cast<std::size_t>(b.values->size()) != b.expected_dim) {
      throw ConfigError("block '" + b.name + "' has dimension " + std::to_string(b.values->size()) + ", expected " +
                        std::to_string(b.expected_dim));
    }
    fv.append(b.name, *b.values);
  }
  return fv;
}

// Frame-by-feature matrix with named columns.
struct FeatureMatrix {
  Mat values;
  std::vector<std::string> columns;

  Eigen::Index rows() const { return values.rows(); }

  Vec column(std::string_view name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::out_of_range("no feature column '" + std::string(name) + "'");
    return values.col(it - columns.begin());
  }

  // CSV with a header row naming every column.
  std::string to_csv() const {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += "\n";
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      for (Eigen::Index c = 0; c < values.cols(); ++c) out += (c ? "," : "") + fmt_double(values(r, c));
      out += "\n";
    }
    return out;
  }

  static FeatureMatrix from_csv(std::string_view text, const std::string& name) {
    FeatureMatrix m;
    std::vector<std::vector<double>> rows;
    bool header = true;
    for (const auto& raw : split(text, '\n')) {
      const auto line = trim(raw);
      if (line.empty()) continue;
      if (header) {
        for (const auto& c : split(line, ',')) m.columns.emplace_back(trim(c));
        header = false;
        continue;
      }
      std::vector<double> row;
      for (const auto& c : split(line, ',')) row.push_back(parse_double(c, name));
      if (row.size() != m.columns.size()) throw DataError(name + ": ragged feature row");
      rows.push_back(std::move(row));
    }
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.columns.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < rows[r].size(); ++c) m.values(r, c) = rows[r][c];
    }
    return m;
  }
};

}  // namespace speechfuse
