#pragma once

#include "avatar/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace avatar {

struct HashGridConfig {
    int levels = 16;
    int log2_table_size = 17;
    int features_per_entry = 4;
    int base_resolution = 4;
    double growth = 1.5;
    int hidden_width = 64;
    int hidden_layers = 2;
    Vec3 aabb_min = Vec3::Constant(-1.0);
    Vec3 aabb_max = Vec3::Constant(1.0);

    std::size_t table_size() const { return std::size_t{1} << log2_table_size; }
    int encoding_width() const { return levels * features_per_entry; }
    /// floor(base_resolution * growth^level)
    int resolution(int level) const;
    /// Levels whose (N+1)^3 corner lattice fits in the table are indexed densely.
    bool dense(int level) const;
};

/// Corner index and trilinear weight of one grid vertex touched by a query.
struct CornerRef {
    std::uint32_t entry = 0;
    double weight = 0.0;
};

/// Spatial hash of an integer lattice point into [0, table_size).
std::uint32_t hash_corner(std::int64_t x, std::int64_t y, std::int64_t z, std::size_t table_size);

/// Multiresolution hash grid followed by a small ReLU MLP with a 3-wide output.
///
/// All trainable values live in one flat parameter vector: the per-level
/// feature tables first, then the head's weights and biases. forward() caches
/// what backward() needs; backward() accumulates into grad() and consumes the
/// cache.
class HashField {
  public:
    enum class Activation { None, Sigmoid };

    HashField() = default;
    /// Tables ~ U[-1e-4, 1e-4], hidden layers Kaiming-uniform, last layer zero.
    HashField(const HashGridConfig &config, Activation activation, std::uint64_t seed);

    const HashGridConfig &config() const { return config_; }
    Activation activation() const { return activation_; }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::span<double> grad() { return grad_; }
    std::span<const double> grad() const { return grad_; }
    void zero_grad();

    std::size_t table_param_count() const;
    double &table_entry(int level, std::size_t entry, int feature);

    /// Concatenated per-level trilinear features of p (clamped to the AABB).
    Eigen::VectorXd encode(const Vec3 &p) const;
    /// Corner references of p at one level, in (dx, dy, dz) binary order.
    std::array<CornerRef, 8> corners(const Vec3 &p, int level) const;

    /// Uncached evaluation of a single point.
    Vec3 evaluate(const Vec3 &p) const;

    /// Batched evaluation that caches activations for backward().
    std::vector<Vec3> forward(std::span<const Vec3> points);
    /// Accumulates parameter gradients for the cached batch.
    /// Throws std::logic_error("no cached activations") without a prior forward().
    void backward(std::span<const Vec3> grad_out);
    bool has_cache() const { return !cache_.empty(); }

  private:
    struct Layer {
        std::size_t weight = 0; // offset of a rows x cols row-major block
        std::size_t bias = 0;
        int rows = 0;
        int cols = 0;
    };
    struct QueryCache {
        std::vector<CornerRef> corners; // levels x 8
        std::vector<Eigen::VectorXd> activations; // input to each layer
        std::vector<Eigen::VectorXd> pre_activations; // output of each hidden layer before ReLU
        Vec3 output;
    };

    Vec3 run_head(const Eigen::VectorXd &encoding, QueryCache *cache) const;
    void encode_into(const Vec3 &p, Eigen::VectorXd &out, std::vector<CornerRef> *corners) const;

    HashGridConfig config_;
    Activation activation_ = Activation::None;
    std::vector<double> params_;
    std::vector<double> grad_;
    std::vector<Layer> layers_;
    std::vector<QueryCache> cache_;
};

/// Displacement field: canonical vertex -> offset in scene units.
inline Vec3 displacement(const HashField &field, const Vec3 &p) { return field.evaluate(p); }
/// Color field: canonical point -> RGB in (0, 1).
inline Vec3 color(const HashField &field, const Vec3 &p) { return field.evaluate(p); }

} // namespace avatar
