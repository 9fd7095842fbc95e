#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct Dataset {
    Matrix x;                // n x input_dim
    std::vector<int> y;
    int num_classes = 0;
};

struct Shard {
    int device_id = -1;
    Matrix x;
    std::vector<int> y;
    std::vector<int> class_set;  // sorted distinct classes in this shard
};

struct PartitionSpec {
    int n_devices = 0;
    int classes_per_device = 0;  // P
    uint64_t seed = 0;
};

struct IdxError : std::runtime_error {
    enum class Kind { OpenFailed, BadMagic, Truncated, CountMismatch };
    Kind kind;
    IdxError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Gaussian blobs: class means drawn uniformly on the sphere of radius
// class_sep, isotropic noise noise_sigma. Deterministic in seed.
Dataset synth_dataset(int num_classes, int input_dim, int samples_per_class, double class_sep,
                      double noise_sigma, uint64_t seed);

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

// One draw of class means shared by both splits; per-class sample blocks are
// split train-first so the two sets never overlap.
TrainTestSplit synth_train_test(int num_classes, int input_dim, int train_per_class, int test_per_class,
                                double class_sep, double noise_sigma, uint64_t seed);

// IDX image/label pair (big-endian headers, magics 0x803 / 0x801); pixels are
// scaled to [0, 1] by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of load_idx for byte-exact round trips; pixel values are clamped and
// rounded back to bytes. rows * cols must equal the feature dim.
void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path, int rows,
               int cols);

// Throws if some class in [0, num_classes) has no sample.
void validate_dataset(const Dataset& ds);

// Label-sorted chunking: each class is cut into N*P/C equal chunks, chunks are
// dealt round-robin over a seeded device permutation. Every shard gets exactly
// P chunks of P distinct classes; shards are disjoint and cover the dataset.
std::vector<Shard> partition_noniid(const Dataset& ds, const PartitionSpec& spec);

// Without-replacement batch cursor. One pass visits every shard sample exactly
// once; the order reshuffles when a pass is exhausted. Value semantics: copy
// the stream to snapshot its position.
struct BatchStream {
    const Shard* shard = nullptr;
    int batch_size = 0;
    Rng rng;
    std::vector<int> order;
    size_t cursor = 0;
};

BatchStream make_batch_stream(const Shard& shard, int batch_size, Rng rng);
Batch next_batch(BatchStream& bs);

}  // namespace fedsim
