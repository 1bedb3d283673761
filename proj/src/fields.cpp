#include "avatar/fields.hpp"

#include "avatar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace avatar {

int HashGridConfig::resolution(int level) const {
    return static_cast<int>(std::floor(base_resolution * std::pow(growth, level)));
}

bool HashGridConfig::dense(int level) const {
    const double n = resolution(level) + 1.0;
    return n * n * n <= static_cast<double>(table_size());
}

std::uint32_t hash_corner(std::int64_t x, std::int64_t y, std::int64_t z, std::size_t table_size) {
    const std::uint32_t h = (static_cast<std::uint32_t>(x) * 1u) ^ (static_cast<std::uint32_t>(y) * 2654435761u) ^
                            (static_cast<std::uint32_t>(z) * 805459861u);
    return static_cast<std::uint32_t>(h % table_size);
}

HashField::HashField(const HashGridConfig &config, Activation activation, std::uint64_t seed)
    : config_(config), activation_(activation) {
    if (config.levels < 1 || config.features_per_entry < 1 || config.base_resolution < 1 || config.growth < 1.0 ||
        config.log2_table_size < 1 || config.log2_table_size > 30 || config.hidden_layers < 0 ||
        config.hidden_width < 1)
        throw std::invalid_argument("invalid hash grid configuration");
    if (!((config.aabb_max - config.aabb_min).minCoeff() > 0.0))
        throw std::invalid_argument("hash grid domain must have positive extent");

    std::size_t offset = table_param_count();
    int in = config.encoding_width();
    for (int l = 0; l <= config.hidden_layers; ++l) {
        const int out = (l == config.hidden_layers) ? 3 : config.hidden_width;
        Layer layer;
        layer.rows = out;
        layer.cols = in;
        layer.weight = offset;
        offset += static_cast<std::size_t>(out) * in;
        layer.bias = offset;
        offset += out;
        layers_.push_back(layer);
        in = out;
    }
    params_.assign(offset, 0.0);
    grad_.assign(offset, 0.0);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> table_init(-1e-4, 1e-4);
    for (std::size_t i = 0; i < table_param_count(); ++i) params_[i] = table_init(rng);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        const double bound = std::sqrt(6.0 / layers_[l].cols);
        std::uniform_real_distribution<double> kaiming(-bound, bound);
        const std::size_t count = static_cast<std::size_t>(layers_[l].rows) * layers_[l].cols;
        for (std::size_t i = 0; i < count; ++i) params_[layers_[l].weight + i] = kaiming(rng);
    }
}

void HashField::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

std::size_t HashField::table_param_count() const {
    return static_cast<std::size_t>(config_.levels) * config_.table_size() * config_.features_per_entry;
}

double &HashField::table_entry(int level, std::size_t entry, int feature) {
    return params_[(static_cast<std::size_t>(level) * config_.table_size() + entry) * config_.features_per_entry +
                   feature];
}

std::array<CornerRef, 8> HashField::corners(const Vec3 &p, int level) const {
    const int n = config_.resolution(level);
    const Vec3 extent = config_.aabb_max - config_.aabb_min;
    std::array<std::int64_t, 3> base{};
    std::array<double, 3> frac{};
    for (int a = 0; a < 3; ++a) {
        const double u = std::clamp((p[a] - config_.aabb_min[a]) / extent[a], 0.0, 1.0);
        const double x = u * n;
        const auto b = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(x)), n - 1);
        base[a] = b;
        frac[a] = x - static_cast<double>(b);
    }
    const bool dense = config_.dense(level);
    const std::int64_t stride = n + 1;
    std::array<CornerRef, 8> out;
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const std::int64_t x = base[0] + dx, y = base[1] + dy, z = base[2] + dz;
        out[c].weight = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) * (dz ? frac[2] : 1.0 - frac[2]);
        out[c].entry = dense ? static_cast<std::uint32_t>(x + stride * (y + stride * z))
                             : hash_corner(x, y, z, config_.table_size());
    }
    return out;
}

void HashField::encode_into(const Vec3 &p, Eigen::VectorXd &out, std::vector<CornerRef> *corner_log) const {
    const int f = config_.features_per_entry;
    out.setZero(config_.encoding_width());
    const std::size_t table = config_.table_size();
    for (int l = 0; l < config_.levels; ++l) {
        const auto cs = corners(p, l);
        const double *level_table = params_.data() + static_cast<std::size_t>(l) * table * f;
        for (const auto &c : cs) {
            const double *row = level_table + static_cast<std::size_t>(c.entry) * f;
            for (int k = 0; k < f; ++k) out[l * f + k] += c.weight * row[k];
        }
        if (corner_log) corner_log->insert(corner_log->end(), cs.begin(), cs.end());
    }
}

Eigen::VectorXd HashField::encode(const Vec3 &p) const {
    Eigen::VectorXd e;
    encode_into(p, e, nullptr);
    return e;
}

Vec3 HashField::run_head(const Eigen::VectorXd &encoding, QueryCache *cache) const {
    Eigen::VectorXd x = encoding;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer &layer = layers_[l];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
            params_.data() + layer.weight, layer.rows, layer.cols);
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + layer.bias, layer.rows);
        if (cache) cache->activations.push_back(x);
        Eigen::VectorXd z = w * x + b;
        if (l + 1 < layers_.size()) {
            if (cache) cache->pre_activations.push_back(z);
            x = z.cwiseMax(0.0);
        } else {
            x = std::move(z);
        }
    }
    Vec3 out = x.head<3>();
    if (activation_ == Activation::Sigmoid)
        for (int k = 0; k < 3; ++k) out[k] = 1.0 / (1.0 + std::exp(-out[k]));
    if (cache) cache->output = out;
    return out;
}

Vec3 HashField::evaluate(const Vec3 &p) const {
    if (params_.empty()) throw std::logic_error("hash field is not initialized");
    return run_head(encode(p), nullptr);
}

std::vector<Vec3> HashField::forward(std::span<const Vec3> points) {
    if (params_.empty()) throw std::logic_error("hash field is not initialized");
    cache_.assign(points.size(), {});
    std::vector<Vec3> out(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
        QueryCache &qc = cache_[i];
        qc.corners.reserve(static_cast<std::size_t>(config_.levels) * 8);
        Eigen::VectorXd e;
        encode_into(points[i], e, &qc.corners);
        out[i] = run_head(e, &qc);
    });
    return out;
}

void HashField::backward(std::span<const Vec3> grad_out) {
    if (cache_.empty()) throw std::logic_error("no cached activations");
    if (grad_out.size() != cache_.size()) throw std::invalid_argument("gradient count differs from cached batch");

    const std::size_t n = cache_.size();
    const std::size_t head_begin = table_param_count();
    const std::size_t head_size = params_.size() - head_begin;

    // Per-query input gradients for the encoding; head gradients go to
    // fixed-size chunk partial sums that are reduced in chunk order.
    constexpr std::size_t kChunk = 64;
    std::vector<Eigen::VectorXd> d_encoding(n);
    std::vector<std::vector<double>> partial((n + kChunk - 1) / kChunk);
    parallel_chunks(n, kChunk, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        std::vector<double> &local = partial[chunk];
        local.assign(head_size, 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            const QueryCache &qc = cache_[i];
            Eigen::VectorXd d = Eigen::VectorXd::Zero(3);
            for (int k = 0; k < 3; ++k) {
                double g = grad_out[i][k];
                if (activation_ == Activation::Sigmoid) g *= qc.output[k] * (1.0 - qc.output[k]);
                d[k] = g;
            }
            for (std::size_t li = layers_.size(); li-- > 0;) {
                const Layer &layer = layers_[li];
                if (li + 1 < layers_.size()) {
                    const Eigen::VectorXd &z = qc.pre_activations[li];
                    for (int r = 0; r < layer.rows; ++r)
                        if (z[r] <= 0.0) d[r] = 0.0;
                }
                const Eigen::VectorXd &x = qc.activations[li];
                Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
                    local.data() + (layer.weight - head_begin), layer.rows, layer.cols);
                Eigen::Map<Eigen::VectorXd> gb(local.data() + (layer.bias - head_begin), layer.rows);
                gw.noalias() += d * x.transpose();
                gb += d;
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
                    params_.data() + layer.weight, layer.rows, layer.cols);
                d = w.transpose() * d;
            }
            d_encoding[i] = std::move(d);
        }
    });
    for (const auto &local : partial)
        for (std::size_t k = 0; k < head_size; ++k) grad_[head_begin + k] += local[k];

    const int f = config_.features_per_entry;
    const std::size_t table = config_.table_size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto &corner_refs = cache_[i].corners;
        const Eigen::VectorXd &de = d_encoding[i];
        for (int l = 0; l < config_.levels; ++l) {
            double *level_grad = grad_.data() + static_cast<std::size_t>(l) * table * f;
            for (int c = 0; c < 8; ++c) {
                const CornerRef &ref = corner_refs[static_cast<std::size_t>(l) * 8 + c];
                double *row = level_grad + static_cast<std::size_t>(ref.entry) * f;
                for (int k = 0; k < f; ++k) row[k] += ref.weight * de[l * f + k];
            }
        }
    }
    cache_.clear();
}

} // namespace avatar
