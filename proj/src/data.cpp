#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>

namespace fedsim {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IdxError(IdxError::Kind::Truncated, "idx: " + path + " truncated in header");
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset synth_dataset(int num_classes, int input_dim, int samples_per_class, double class_sep,
                      double noise_sigma, uint64_t seed) {
    TrainTestSplit split =
        synth_train_test(num_classes, input_dim, samples_per_class, 0, class_sep, noise_sigma, seed);
    return std::move(split.train);
}

TrainTestSplit synth_train_test(int num_classes, int input_dim, int train_per_class, int test_per_class,
                                double class_sep, double noise_sigma, uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("synth: num_classes must be >= 2");
    if (input_dim < 1) throw std::invalid_argument("synth: input_dim must be >= 1");
    if (train_per_class < 1) throw std::invalid_argument("synth: samples_per_class must be >= 1");
    if (test_per_class < 0) throw std::invalid_argument("synth: test_per_class must be >= 0");
    if (class_sep < 0.0 || noise_sigma < 0.0)
        throw std::invalid_argument("synth: class_sep and noise_sigma must be >= 0");

    Rng rng = derive_stream(seed, 0, 0, StreamPurpose::DataGen);

    // Means: normalized Gaussian directions scaled to the class_sep sphere.
    Matrix means(num_classes, input_dim);
    for (int c = 0; c < num_classes; ++c) {
        double norm2 = 0.0;
        for (int d = 0; d < input_dim; ++d) {
            double v = rng.normal();
            means.at(c, d) = v;
            norm2 += v * v;
        }
        double scale = norm2 > 0.0 ? class_sep / std::sqrt(norm2) : 0.0;
        for (int d = 0; d < input_dim; ++d) means.at(c, d) *= scale;
    }

    auto fill = [&](Dataset& ds, int per_class) {
        ds.num_classes = num_classes;
        ds.x = Matrix(num_classes * per_class, input_dim);
        ds.y.resize(static_cast<size_t>(num_classes) * per_class);
        int row = 0;
        for (int c = 0; c < num_classes; ++c) {
            for (int s = 0; s < per_class; ++s, ++row) {
                for (int d = 0; d < input_dim; ++d)
                    ds.x.at(row, d) = means.at(c, d) + noise_sigma * rng.normal();
                ds.y[row] = c;
            }
        }
    };

    TrainTestSplit split;
    fill(split.train, train_per_class);
    if (test_per_class > 0) fill(split.test, test_per_class);
    return split;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IdxError(IdxError::Kind::OpenFailed, "idx: cannot open " + images_path);
    uint32_t magic = read_be_u32(img, images_path);
    if (magic != kImagesMagic)
        throw IdxError(IdxError::Kind::BadMagic, "idx: " + images_path + " has bad magic");
    uint32_t count = read_be_u32(img, images_path);
    uint32_t rows = read_be_u32(img, images_path);
    uint32_t cols = read_be_u32(img, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IdxError(IdxError::Kind::OpenFailed, "idx: cannot open " + labels_path);
    uint32_t lmagic = read_be_u32(lab, labels_path);
    if (lmagic != kLabelsMagic)
        throw IdxError(IdxError::Kind::BadMagic, "idx: " + labels_path + " has bad magic");
    uint32_t lcount = read_be_u32(lab, labels_path);
    if (lcount != count)
        throw IdxError(IdxError::Kind::CountMismatch,
                       "idx: " + images_path + " has " + std::to_string(count) + " images but " +
                           labels_path + " has " + std::to_string(lcount) + " labels");

    const size_t dim = static_cast<size_t>(rows) * cols;
    Dataset ds;
    ds.x = Matrix(static_cast<int>(count), static_cast<int>(dim));
    ds.y.resize(count);

    std::vector<unsigned char> pixel_buf(dim);
    for (uint32_t i = 0; i < count; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_buf.data()), static_cast<std::streamsize>(dim)))
            throw IdxError(IdxError::Kind::Truncated, "idx: " + images_path + " truncated in pixel data");
        double* row = ds.x.row(static_cast<int>(i));
        for (size_t d = 0; d < dim; ++d) row[d] = pixel_buf[d] / 255.0;
        unsigned char label;
        if (!lab.read(reinterpret_cast<char*>(&label), 1))
            throw IdxError(IdxError::Kind::Truncated, "idx: " + labels_path + " truncated in label data");
        ds.y[i] = label;
    }
    ds.num_classes = 0;
    for (int label : ds.y) ds.num_classes = std::max(ds.num_classes, label + 1);
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path, int rows,
               int cols) {
    if (rows * cols != ds.x.cols) throw std::invalid_argument("write_idx: rows*cols != feature dim");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("write_idx: cannot open " + images_path);
    write_be_u32(img, kImagesMagic);
    write_be_u32(img, static_cast<uint32_t>(ds.x.rows));
    write_be_u32(img, static_cast<uint32_t>(rows));
    write_be_u32(img, static_cast<uint32_t>(cols));
    for (int i = 0; i < ds.x.rows; ++i) {
        const double* row = ds.x.row(i);
        for (int d = 0; d < ds.x.cols; ++d) {
            double v = std::clamp(row[d], 0.0, 1.0) * 255.0;
            unsigned char b = static_cast<unsigned char>(std::lround(v));
            img.write(reinterpret_cast<char*>(&b), 1);
        }
    }
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("write_idx: cannot open " + labels_path);
    write_be_u32(lab, kLabelsMagic);
    write_be_u32(lab, static_cast<uint32_t>(ds.y.size()));
    for (int label : ds.y) {
        unsigned char b = static_cast<unsigned char>(label);
        lab.write(reinterpret_cast<char*>(&b), 1);
    }
}

void validate_dataset(const Dataset& ds) {
    if (ds.num_classes < 2) throw std::invalid_argument("dataset: num_classes must be >= 2");
    if (ds.x.rows == 0) throw std::invalid_argument("dataset: empty");
    if (ds.y.size() != static_cast<size_t>(ds.x.rows)) throw std::invalid_argument("dataset: label count mismatch");
    std::vector<int> counts(ds.num_classes, 0);
    for (int label : ds.y) {
        if (label < 0 || label >= ds.num_classes)
            throw std::invalid_argument("dataset: label " + std::to_string(label) + " out of range");
        ++counts[label];
    }
    for (int c = 0; c < ds.num_classes; ++c)
        if (counts[c] == 0)
            throw std::invalid_argument("dataset: class " + std::to_string(c) + " has no samples");
}

std::vector<Shard> partition_noniid(const Dataset& ds, const PartitionSpec& spec) {
    validate_dataset(ds);
    const int n = spec.n_devices, p = spec.classes_per_device, c = ds.num_classes;
    if (n < 1) throw std::invalid_argument("partition: n_devices must be >= 1");
    if (p < 1 || p > c)
        throw std::invalid_argument("partition: classes_per_device " + std::to_string(p) +
                                    " must be in [1, " + std::to_string(c) + "]");
    const long long total_chunks = static_cast<long long>(n) * p;
    if (total_chunks % c != 0)
        throw std::invalid_argument("partition: n_devices*classes_per_device = " + std::to_string(total_chunks) +
                                    " not divisible by num_classes = " + std::to_string(c));
    const int chunks_per_class = static_cast<int>(total_chunks / c);

    // Sample indices per class, in dataset order (stable).
    std::vector<std::vector<int>> by_class(c);
    for (int i = 0; i < ds.x.rows; ++i) by_class[ds.y[i]].push_back(i);
    for (int cls = 0; cls < c; ++cls)
        if (static_cast<int>(by_class[cls].size()) < chunks_per_class)
            throw std::invalid_argument("partition: class " + std::to_string(cls) + " has " +
                                        std::to_string(by_class[cls].size()) + " samples, fewer than " +
                                        std::to_string(chunks_per_class) + " chunks");

    // Deal chunks round-robin over a seeded device permutation. Within one
    // class the chunks land on chunks_per_class consecutive positions of the
    // cycle, and chunks_per_class = N*P/C <= N because P <= C, so no device
    // can receive two chunks of the same class.
    std::vector<int> device_order(n);
    std::iota(device_order.begin(), device_order.end(), 0);
    Rng rng = derive_stream(spec.seed, 0, 0, StreamPurpose::Partition);
    rng.shuffle(device_order);

    std::vector<std::vector<int>> rows_per_device(n);
    long long deal_pos = 0;
    for (int cls = 0; cls < c; ++cls) {
        const auto& rows = by_class[cls];
        const int chunk_size = static_cast<int>(rows.size()) / chunks_per_class;
        for (int chunk = 0; chunk < chunks_per_class; ++chunk, ++deal_pos) {
            int device = device_order[deal_pos % n];
            int begin = chunk * chunk_size;
            // the division remainder (< chunk_size samples) goes to the last chunk
            int end = (chunk == chunks_per_class - 1) ? static_cast<int>(rows.size()) : begin + chunk_size;
            for (int r = begin; r < end; ++r) rows_per_device[device].push_back(rows[r]);
        }
    }

    std::vector<Shard> shards(n);
    for (int d = 0; d < n; ++d) {
        const auto& rows = rows_per_device[d];
        Shard& s = shards[d];
        s.device_id = d;
        s.x = Matrix(static_cast<int>(rows.size()), ds.x.cols);
        s.y.resize(rows.size());
        std::set<int> classes;
        for (size_t i = 0; i < rows.size(); ++i) {
            const double* src = ds.x.row(rows[i]);
            std::copy(src, src + ds.x.cols, s.x.row(static_cast<int>(i)));
            s.y[i] = ds.y[rows[i]];
            classes.insert(s.y[i]);
        }
        s.class_set.assign(classes.begin(), classes.end());
    }
    return shards;
}

BatchStream make_batch_stream(const Shard& shard, int batch_size, Rng rng) {
    if (shard.x.rows == 0) throw std::invalid_argument("batch stream: empty shard");
    if (batch_size < 1) throw std::invalid_argument("batch stream: batch_size must be >= 1");
    BatchStream bs;
    bs.shard = &shard;
    bs.batch_size = batch_size;
    bs.rng = rng;
    bs.order.resize(shard.x.rows);
    std::iota(bs.order.begin(), bs.order.end(), 0);
    bs.rng.shuffle(bs.order);
    bs.cursor = 0;
    return bs;
}

Batch next_batch(BatchStream& bs) {
    if (!bs.shard) throw std::logic_error("batch stream: not initialized");
    const Shard& shard = *bs.shard;
    Batch batch;
    batch.x = Matrix(bs.batch_size, shard.x.cols);
    batch.y.resize(bs.batch_size);
    for (int i = 0; i < bs.batch_size; ++i) {
        if (bs.cursor == bs.order.size()) {
            bs.rng.shuffle(bs.order);
            bs.cursor = 0;
        }
        int row = bs.order[bs.cursor++];
        const double* src = shard.x.row(row);
        std::copy(src, src + shard.x.cols, batch.x.row(i));
        batch.y[i] = shard.y[row];
    }
    return batch;
}

}  // namespace fedsim
