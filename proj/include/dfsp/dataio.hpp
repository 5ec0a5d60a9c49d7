#pragma once

// Dataset manifests and the synthetic compositional generator.
//
// Manifest directory layout:
//   states.txt           one state name per line
//   objects.txt          one object name per line
//   pairs_<split>.txt    "state_name object_name" per line, for split in
//                        train, val_seen, val_unseen, test_seen, test_unseen
//   features.bin         little-endian float64 values, no header
//   index.csv            header "sample_id,offset,dim,state,object,split";
//                        offset is a byte offset into features.bin, state and
//                        object are 0-based indices, split is train|val|test

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dfsp/composition_space.hpp"
#include "dfsp/matrix.hpp"

namespace dfsp {

enum class Split { train, val, test };

const char* to_string(Split s);
Split parse_split(const std::string& s);

struct SampleRecord {
    std::string id;
    std::size_t index = 0;  // row in the feature store
    Pair pair;
    Split split = Split::train;
};

/// Feature vectors of one dimension plus their labels. Read-only after
/// construction; concurrent readers are fine.
class SampleStore {
public:
    SampleStore() = default;
    explicit SampleStore(std::size_t dim) : dim_(dim) {}

    void add(std::string id, std::span<const double> feature, Pair pair, Split split);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return records_.size(); }
    const std::vector<SampleRecord>& records() const { return records_; }
    std::span<const double> feature(std::size_t i) const {
        return {features_.data() + i * dim_, dim_};
    }

    std::vector<std::size_t> select(Split split) const;
    // Stacked features of the given samples, one row each.
    Matrix gather(std::span<const std::size_t> samples) const;
    std::vector<Pair> labels(std::span<const std::size_t> samples) const;

private:
    std::size_t dim_ = 0;
    std::vector<SampleRecord> records_;
    std::vector<double> features_;
};

/// Names, split pair lists and samples. Validation and test are two spaces
/// that share the primitives and the seen (train) pairs.
struct Dataset {
    std::vector<std::string> states;
    std::vector<std::string> objects;
    std::vector<Pair> train_pairs;
    std::vector<Pair> val_seen;
    std::vector<Pair> val_unseen;
    std::vector<Pair> test_seen;
    std::vector<Pair> test_unseen;
    SampleStore samples;

    CompositionSpace val_space(WorldMode world = WorldMode::closed) const;
    CompositionSpace test_space(WorldMode world = WorldMode::closed) const;

    // Throws DataError on any invariant violation.
    void validate() const;
    // Stable FNV-1a digest of names and pair lists.
    std::string split_hash() const;
};

Dataset load_manifest(const std::filesystem::path& dir);
void write_manifest(const Dataset& data, const std::filesystem::path& dir);

std::vector<Pair> read_pair_file(const std::filesystem::path& file,
                                 const std::vector<std::string>& states,
                                 const std::vector<std::string>& objects);

struct SyntheticSpec {
    std::size_t num_states = 5;
    std::size_t num_objects = 5;
    std::size_t dim = 16;
    std::size_t samples_per_pair = 20;
    double noise = 0.05;
    double unseen_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
    // "n=5,m=5,dim=16,samples=20,sigma=0.05,unseen=0.2,seed=0"; missing keys keep defaults.
    static SyntheticSpec parse(const std::string& text);
    std::string to_string() const;
};

/// Latent unit vector per state (u_s) and per object (v_o); a sample of
/// (s, o) is normalize(u_s + v_o + noise * N(0, I)). Unseen pairs are held
/// out uniformly at random without leaving any primitive uncovered.
/// Seen-pair samples split 60/20/20 into train/val/test, unseen-pair
/// samples 50/50 into val/test.
struct SyntheticData {
    Dataset data;
    Matrix state_latents;   // n x dim
    Matrix object_latents;  // m x dim
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace dfsp
