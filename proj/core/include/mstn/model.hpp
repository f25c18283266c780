#pragma once

// The multi-scale grid. Cells live on a triangular lattice: cell (i,j)
// exists iff i + j <= scales-1. Row 0 extracts features branch by branch
// (each branch j runs at resolution H/2^j); every higher cell fuses its
// same-scale parent with the next-coarser parent. The restored image is read
// off the top of branch 0.
//
// Path presets replace the triangle with a single descend-then-ascend chain
// over K scales (K = 1, 2, 3, or all). Every preset has exactly scales-1
// cells after row 0; chains shorter than that are padded with residual
// blocks at full resolution, so depth along branch 0 is preset-invariant.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mstn/fusion.hpp"

namespace mstn {

struct MstnConfig {
  int rows = 5;    // i_max; must equal scales
  int scales = 5;  // j_max
  int base_channels = 8;
  bool use_afsm = true;
  bool use_mffm = true;
  std::string path_preset = "full";

  // Branch widths double per scale, capped at 8x the base width.
  int width(int j) const {
    long long w = static_cast<long long>(base_channels) << j;
    const long long cap = 8LL * base_channels;
    return static_cast<int>(w < cap ? w : cap);
  }

  // Scales actually traversed by the configured path.
  int path_scales() const {
    if (path_preset == "dark_gray") return 1;
    if (path_preset == "blue") return 2;
    if (path_preset == "orange") return 3;
    return scales;  // full and gray
  }

  void validate() const {
    if (rows < 1 || scales < 1) {
      throw ConfigError("MstnConfig: rows and scales must be >= 1");
    }
    if (rows != scales) {
      throw ConfigError("MstnConfig: rows (" + std::to_string(rows) +
                        ") must equal scales (" + std::to_string(scales) + ")");
    }
    if (base_channels < 1) {
      throw ConfigError("MstnConfig: base_channels must be >= 1");
    }
    if (path_preset != "full" && path_preset != "dark_gray" &&
        path_preset != "blue" && path_preset != "orange" &&
        path_preset != "gray") {
      throw ConfigError("MstnConfig: unknown path_preset '" + path_preset +
                        "'");
    }
    if (path_scales() > scales) {
      throw ConfigError("MstnConfig: path_preset '" + path_preset +
                        "' needs at least " + std::to_string(path_scales()) +
                        " scales, have " + std::to_string(scales));
    }
    if (path_preset != "full" && !use_mffm) {
      throw ConfigError(
          "MstnConfig: path presets require use_mffm=true (use preset "
          "dark_gray for the no-fusion chain)");
    }
  }
};

/// Validates the preset and returns the config it denotes. "full" is the
/// identity; the named paths keep the grid dimensions and only select the
/// data-flow route, so the config comes back unchanged apart from validation.
inline MstnConfig apply_path_preset(const MstnConfig& config) {
  config.validate();
  return config;
}

struct GridCell {
  int i = 0;
  int j = 0;
  enum class Kind { RB, MFFM } kind = Kind::RB;
};

template <class T>
class MstnModel {
 public:
  explicit MstnModel(const MstnConfig& config, uint64_t seed)
      : config_(config) {
    config_.validate();
    Rng rng(seed);
    const int jmax = config_.scales;
    const int k = config_.path_scales();
    const bool triangle = config_.path_preset == "full";

    // Row 0: one RB per traversed branch, chained through strided convs.
    for (int j = 0; j < k; ++j) {
      if (j > 0) {
        row0_downs_.emplace_back(params_, "down_0_" + std::to_string(j),
                                 config_.width(j - 1), config_.width(j), 3, 2,
                                 1, rng);
      }
      const int cin = j == 0 ? 3 : config_.width(j);
      row0_rbs_.emplace_back(params_, cell_name(0, j) + ".rb", cin,
                             config_.width(j), rng);
      layout_.push_back({0, j, GridCell::Kind::RB});
    }

    if (triangle) {
      for (int i = 1; i <= jmax - 1; ++i) {
        for (int j = 0; j <= jmax - 1 - i; ++j) {
          // Both recurrence parents must be on the lattice.
          require_cell(i - 1, j);
          require_cell(i - 1, j + 1);
          cells_.push_back(make_cell(i, j, config_.use_mffm, rng));
        }
      }
    } else {
      for (int s = 1; s <= jmax - 1; ++s) {
        const int js = std::max(k - 1 - s, 0);
        const bool is_mffm = s <= k - 1;
        cells_.push_back(make_cell(s, js, is_mffm, rng));
      }
    }

    tail_ = ConvLayer<T>(params_, "tail", config_.width(0), 3, 3, 1, 1, rng);
  }

  MstnModel(const MstnModel&) = delete;
  MstnModel& operator=(const MstnModel&) = delete;
  MstnModel(MstnModel&&) = default;
  MstnModel& operator=(MstnModel&&) = default;

  /// Spatial dims must be a multiple of this (deepest scale's stride).
  int required_multiple() const { return 1 << (config_.path_scales() - 1); }

  Tensor<T> forward(const Tensor<T>& hazy) const {
    const Shape& s = hazy.shape();
    if (s.c != 3) {
      throw ShapeError("MstnModel: expected 3-channel input, got " + s.str());
    }
    const int m = required_multiple();
    if (s.h % m != 0 || s.w % m != 0) {
      throw ConfigError("MstnModel: input " + s.str() +
                        " must have H,W divisible by " + std::to_string(m) +
                        "; pad the input first (the CLI pads automatically)");
    }

    const int k = config_.path_scales();
    std::vector<Tensor<T>> row0(k);
    for (int j = 0; j < k; ++j) {
      Tensor<T> in = j == 0 ? hazy : row0_downs_[j - 1].forward(row0[j - 1]);
      row0[j] = row0_rbs_[j].forward(in);
    }

    Tensor<T> top;
    if (config_.path_preset == "full") {
      std::vector<Tensor<T>> prev = row0;
      size_t idx = 0;
      for (int i = 1; i <= config_.scales - 1; ++i) {
        std::vector<Tensor<T>> cur(prev.size() - 1);
        for (int j = 0; j < static_cast<int>(cur.size()); ++j) {
          const Cell& cell = cells_[idx++];
          cur[j] = cell.mffm ? cell.mffm->forward(prev[j], prev[j + 1])
                             : cell.rb->forward(prev[j]);
        }
        prev = std::move(cur);
      }
      top = prev[0];
    } else {
      Tensor<T> cur = row0[k - 1];
      for (const Cell& cell : cells_) {
        cur = cell.mffm ? cell.mffm->forward(row0[cell.meta.j], cur)
                        : cell.rb->forward(cur);
      }
      top = cur;
    }
    return tail_.forward(top);
  }

  const MstnConfig& config() const { return config_; }
  ParamRegistry<T>& params() { return params_; }
  const ParamRegistry<T>& params() const { return params_; }
  size_t param_count() const { return params_.scalar_count(); }

  /// Grid cells in construction order (row 0 first); MFFM kind counts the
  /// fusion cells, RB kind the rest.
  std::vector<GridCell> cells() const {
    std::vector<GridCell> out = layout_;
    for (const Cell& c : cells_) out.push_back(c.meta);
    return out;
  }

 private:
  struct Cell {
    GridCell meta;
    std::unique_ptr<Mffm<T>> mffm;
    std::unique_ptr<ResidualBlock<T>> rb;
  };

  static std::string cell_name(int i, int j) {
    return "cell_" + std::to_string(i) + "_" + std::to_string(j);
  }

  void require_cell(int i, int j) const {
    if (!(i >= 0 && j >= 0 && i + j <= config_.scales - 1)) {
      throw ConfigError("MstnModel: recurrence references missing cell (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }

  Cell make_cell(int i, int j, bool as_mffm, Rng& rng) {
    Cell c;
    c.meta = {i, j,
              as_mffm ? GridCell::Kind::MFFM : GridCell::Kind::RB};
    if (as_mffm) {
      c.mffm = std::make_unique<Mffm<T>>(params_, cell_name(i, j),
                                         config_.width(j), config_.width(j + 1),
                                         rng, config_.use_afsm);
    } else {
      c.rb = std::make_unique<ResidualBlock<T>>(params_, cell_name(i, j) + ".rb",
                                                config_.width(j),
                                                config_.width(j), rng);
    }
    return c;
  }

  MstnConfig config_;
  ParamRegistry<T> params_;
  std::vector<ResidualBlock<T>> row0_rbs_;
  std::vector<ConvLayer<T>> row0_downs_;
  std::vector<Cell> cells_;
  ConvLayer<T> tail_;
  std::vector<GridCell> layout_;
};

/// Replicate-pads to the model's required multiple, runs the network, crops
/// back. Identity pad/crop when dims already conform.
template <class T>
Tensor<T> padded_forward(const MstnModel<T>& model, const Tensor<T>& hazy) {
  const Shape& s = hazy.shape();
  const int m = model.required_multiple();
  const int ph = (s.h + m - 1) / m * m;
  const int pw = (s.w + m - 1) / m * m;
  if (ph == s.h && pw == s.w) return model.forward(hazy);
  Tensor<T> out = model.forward(pad_replicate(hazy, ph, pw));
  return crop(out, s.h, s.w);
}

}  // namespace mstn
