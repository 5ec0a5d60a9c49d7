#include "dfsp/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "dfsp/errors.hpp"
#include "dfsp/format.hpp"
#include "dfsp/random.hpp"

namespace fs = std::filesystem;

namespace dfsp {

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw DataError("unknown split '" + s + "'");
}

// ---- SampleStore -------------------------------------------------------------

void SampleStore::add(std::string id, std::span<const double> feature, Pair pair, Split split) {
    if (feature.size() != dim_) {
        throw DataError("sample '" + id + "' has dimension " + std::to_string(feature.size()) +
                        ", store expects " + std::to_string(dim_));
    }
    records_.push_back({std::move(id), records_.size(), pair, split});
    features_.insert(features_.end(), feature.begin(), feature.end());
}

std::vector<std::size_t> SampleStore::select(Split split) const {
    std::vector<std::size_t> out;
    for (const auto& r : records_)
        if (r.split == split) out.push_back(r.index);
    return out;
}

Matrix SampleStore::gather(std::span<const std::size_t> samples) const {
    Matrix m(samples.size(), dim_);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto f = feature(samples[i]);
        std::copy(f.begin(), f.end(), m.row(i).begin());
    }
    return m;
}

std::vector<Pair> SampleStore::labels(std::span<const std::size_t> samples) const {
    std::vector<Pair> out;
    out.reserve(samples.size());
    for (std::size_t i : samples) out.push_back(records_[i].pair);
    return out;
}

// ---- Dataset -----------------------------------------------------------------

CompositionSpace Dataset::val_space(WorldMode world) const {
    return CompositionSpace::build(states, objects, train_pairs, val_unseen, world);
}

CompositionSpace Dataset::test_space(WorldMode world) const {
    return CompositionSpace::build(states, objects, train_pairs, test_unseen, world);
}

void Dataset::validate() const {
    const CompositionSpace val = val_space();
    const CompositionSpace test = test_space();
    auto subset_of_train = [&](const std::vector<Pair>& pairs, const char* name) {
        for (Pair p : pairs) {
            if (!test.is_seen(p)) {
                throw DataError(std::string(name) + " pair (" + states[p.state] + ", " +
                                objects[p.object] + ") is not a train pair");
            }
        }
    };
    subset_of_train(val_seen, "val_seen");
    subset_of_train(test_seen, "test_seen");

    auto in_list = [](const std::vector<Pair>& pairs, Pair p) {
        return std::find(pairs.begin(), pairs.end(), p) != pairs.end();
    };
    for (const SampleRecord& r : samples.records()) {
        const Pair p = r.pair;
        if (p.state >= states.size() || p.object >= objects.size()) {
            throw DataError("sample '" + r.id + "' references an out-of-range primitive");
        }
        bool ok = false;
        switch (r.split) {
            case Split::train: ok = val.is_seen(p); break;
            case Split::val: ok = in_list(val_seen, p) || in_list(val_unseen, p); break;
            case Split::test: ok = in_list(test_seen, p) || in_list(test_unseen, p); break;
        }
        if (!ok) {
            throw DataError("sample '" + r.id + "' (" + states[p.state] + ", " + objects[p.object] +
                            ") is not a " + to_string(r.split) + " pair");
        }
    }
}

std::string Dataset::split_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xff;
        h *= 1099511628211ULL;
    };
    for (const auto& s : states) feed(s);
    feed("|");
    for (const auto& o : objects) feed(o);
    for (const auto* list : {&train_pairs, &val_seen, &val_unseen, &test_seen, &test_unseen}) {
        feed("|");
        for (Pair p : *list) feed(std::to_string(p.state) + "," + std::to_string(p.object));
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---- manifest I/O ----------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::ifstream open_in(const fs::path& p, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(p, mode);
    if (!in) throw DataError("cannot open " + p.string());
    return in;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(p, mode | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

std::vector<std::string> read_names(const fs::path& file) {
    std::ifstream in = open_in(file);
    std::vector<std::string> names;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (line.find_first_of(" \t") != std::string::npos) {
            throw DataError(file.string() + ":" + std::to_string(lineno) +
                            ": names may not contain whitespace");
        }
        names.push_back(line);
    }
    return names;
}

std::size_t lookup(const std::vector<std::string>& names, const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? names.size() : static_cast<std::size_t>(it - names.begin());
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::size_t parse_index(const std::string& s, const std::string& where) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        throw DataError(where + ": expected a non-negative integer, got '" + s + "'");
    }
    if (pos != s.size() || (!s.empty() && s[0] == '-')) {
        throw DataError(where + ": expected a non-negative integer, got '" + s + "'");
    }
    return static_cast<std::size_t>(v);
}

void write_f64_le(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64_le(const unsigned char* bytes) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

const char* kSplitFiles[] = {"train", "val_seen", "val_unseen", "test_seen", "test_unseen"};

}  // namespace

std::vector<Pair> read_pair_file(const fs::path& file, const std::vector<std::string>& states,
                                 const std::vector<std::string>& objects) {
    std::ifstream in = open_in(file);
    std::vector<Pair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string s, o, extra;
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (!(ss >> s >> o) || (ss >> extra)) {
            throw DataError(where + ": expected 'state object'");
        }
        const std::size_t si = lookup(states, s), oi = lookup(objects, o);
        if (si == states.size()) throw DataError(where + ": unknown state '" + s + "'");
        if (oi == objects.size()) throw DataError(where + ": unknown object '" + o + "'");
        const Pair p{si, oi};
        if (std::find(pairs.begin(), pairs.end(), p) != pairs.end()) {
            throw DataError(where + ": duplicate pair '" + line + "'");
        }
        pairs.push_back(p);
    }
    return pairs;
}

Dataset load_manifest(const fs::path& dir) {
    Dataset d;
    d.states = read_names(dir / "states.txt");
    d.objects = read_names(dir / "objects.txt");
    std::vector<Pair>* lists[] = {&d.train_pairs, &d.val_seen, &d.val_unseen, &d.test_seen,
                                  &d.test_unseen};
    for (std::size_t i = 0; i < 5; ++i) {
        *lists[i] = read_pair_file(dir / ("pairs_" + std::string(kSplitFiles[i]) + ".txt"),
                                   d.states, d.objects);
    }

    const fs::path bin_path = dir / "features.bin";
    std::ifstream bin = open_in(bin_path, std::ios::binary);
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)),
                                    std::istreambuf_iterator<char>());

    const fs::path index_path = dir / "index.csv";
    std::ifstream idx = open_in(index_path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(idx, line) ||
        split_csv(trim(line)) !=
            std::vector<std::string>{"sample_id", "offset", "dim", "state", "object", "split"}) {
        throw DataError(index_path.string() + ":1: bad header");
    }
    ++lineno;
    const std::set<Pair> allowed[] = {
        {d.train_pairs.begin(), d.train_pairs.end()},
        [&] {
            std::set<Pair> v(d.val_seen.begin(), d.val_seen.end());
            v.insert(d.val_unseen.begin(), d.val_unseen.end());
            return v;
        }(),
        [&] {
            std::set<Pair> t(d.test_seen.begin(), d.test_seen.end());
            t.insert(d.test_unseen.begin(), d.test_unseen.end());
            return t;
        }(),
    };
    bool have_dim = false;
    std::vector<double> feature;
    while (std::getline(idx, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = index_path.string() + ":" + std::to_string(lineno);
        const auto f = split_csv(line);
        if (f.size() != 6) throw DataError(where + ": expected 6 fields");
        const std::size_t offset = parse_index(f[1], where);
        const std::size_t dim = parse_index(f[2], where);
        const Pair p{parse_index(f[3], where), parse_index(f[4], where)};
        Split split;
        try {
            split = parse_split(f[5]);
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
        if (!have_dim) {
            if (dim == 0) throw DataError(where + ": zero feature dimension");
            d.samples = SampleStore(dim);
            have_dim = true;
        } else if (dim != d.samples.dim()) {
            throw DataError(where + ": dimension " + std::to_string(dim) + " differs from " +
                            std::to_string(d.samples.dim()));
        }
        if (offset % 8 != 0 || offset + dim * 8 > blob.size()) {
            throw DataError(where + ": feature range outside " + bin_path.string());
        }
        if (p.state >= d.states.size() || p.object >= d.objects.size()) {
            throw DataError(where + ": primitive index out of range");
        }
        if (!allowed[static_cast<int>(split)].count(p)) {
            throw DataError(where + ": pair (" + d.states[p.state] + ", " + d.objects[p.object] +
                            ") is not listed for split " + to_string(split));
        }
        feature.resize(dim);
        for (std::size_t c = 0; c < dim; ++c) feature[c] = read_f64_le(blob.data() + offset + 8 * c);
        if (!std::all_of(feature.begin(), feature.end(), [](double v) { return std::isfinite(v); })) {
            throw DataError(where + ": non-finite feature value");
        }
        d.samples.add(f[0], feature, p, split);
    }
    if (!have_dim) throw DataError(index_path.string() + ": no samples");
    d.validate();
    return d;
}

void write_manifest(const Dataset& data, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream out = open_out(dir / "states.txt");
        for (const auto& s : data.states) out << s << '\n';
    }
    {
        std::ofstream out = open_out(dir / "objects.txt");
        for (const auto& o : data.objects) out << o << '\n';
    }
    const std::vector<Pair>* lists[] = {&data.train_pairs, &data.val_seen, &data.val_unseen,
                                        &data.test_seen, &data.test_unseen};
    for (std::size_t i = 0; i < 5; ++i) {
        std::ofstream out = open_out(dir / ("pairs_" + std::string(kSplitFiles[i]) + ".txt"));
        for (Pair p : *lists[i]) out << data.states[p.state] << ' ' << data.objects[p.object] << '\n';
    }
    std::ofstream bin = open_out(dir / "features.bin", std::ios::binary);
    std::ofstream idx = open_out(dir / "index.csv");
    idx << "sample_id,offset,dim,state,object,split\n";
    const std::size_t dim = data.samples.dim();
    for (const SampleRecord& r : data.samples.records()) {
        if (r.id.find_first_of(",\n") != std::string::npos) {
            throw DataError("sample id '" + r.id + "' contains a delimiter");
        }
        idx << r.id << ',' << r.index * dim * 8 << ',' << dim << ',' << r.pair.state << ','
            << r.pair.object << ',' << to_string(r.split) << '\n';
        for (double v : data.samples.feature(r.index)) write_f64_le(bin, v);
    }
    if (!bin || !idx) throw DataError("failed writing manifest to " + dir.string());
}

// ---- synthetic data --------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (num_states < 2 || num_objects < 2) throw DataError("synthetic data needs n, m >= 2");
    if (dim == 0) throw DataError("synthetic feature dimension must be >= 1");
    if (samples_per_pair == 0) throw DataError("synthetic samples per pair must be >= 1");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw DataError("noise scale must be >= 0");
    if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0)) {
        throw DataError("unseen fraction must lie in (0, 1)");
    }
}

SyntheticSpec SyntheticSpec::parse(const std::string& text) {
    SyntheticSpec s;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw DataError("synthetic spec item '" + item + "' lacks '='");
        const std::string key = trim(item.substr(0, eq));
        const std::string val = trim(item.substr(eq + 1));
        try {
            if (key == "n") s.num_states = std::stoul(val);
            else if (key == "m") s.num_objects = std::stoul(val);
            else if (key == "dim") s.dim = std::stoul(val);
            else if (key == "samples") s.samples_per_pair = std::stoul(val);
            else if (key == "sigma") s.noise = std::stod(val);
            else if (key == "unseen") s.unseen_fraction = std::stod(val);
            else if (key == "seed") s.seed = std::stoull(val);
            else throw DataError("unknown synthetic spec key '" + key + "'");
        } catch (const std::logic_error&) {
            throw DataError("bad value for synthetic spec key '" + key + "': '" + val + "'");
        }
    }
    s.validate();
    return s;
}

std::string SyntheticSpec::to_string() const {
    return "n=" + std::to_string(num_states) + ",m=" + std::to_string(num_objects) +
           ",dim=" + std::to_string(dim) + ",samples=" + std::to_string(samples_per_pair) +
           ",sigma=" + format_double(noise) + ",unseen=" + format_double(unseen_fraction) +
           ",seed=" + std::to_string(seed);
}

namespace {

Matrix unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
    Matrix m = gaussian_matrix(rows, dim, 1.0, rng);
    for (std::size_t r = 0; r < rows; ++r) {
        const double n = norm(m.row(r));
        for (double& v : m.row(r)) v /= n;
    }
    return m;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.num_states, m = spec.num_objects;
    Rng latent_rng = make_rng(spec.seed, 1);
    Rng split_rng = make_rng(spec.seed, 2);
    Rng noise_rng = make_rng(spec.seed, 3);

    SyntheticData out;
    out.state_latents = unit_rows(n, spec.dim, latent_rng);
    out.object_latents = unit_rows(m, spec.dim, latent_rng);

    Dataset& d = out.data;
    for (std::size_t i = 0; i < n; ++i) d.states.push_back("s" + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) d.objects.push_back("o" + std::to_string(j));

    const std::size_t total = n * m;
    const auto want_unseen = static_cast<std::size_t>(std::llround(spec.unseen_fraction * total));
    std::vector<Pair> order;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) order.push_back({i, j});
    std::shuffle(order.begin(), order.end(), split_rng);

    std::vector<std::size_t> state_left(n, m), object_left(m, n);
    std::set<Pair> unseen;
    for (Pair p : order) {
        if (unseen.size() == want_unseen) break;
        if (state_left[p.state] > 1 && object_left[p.object] > 1) {
            unseen.insert(p);
            --state_left[p.state];
            --object_left[p.object];
        }
    }
    if (unseen.size() != want_unseen || want_unseen == 0) {
        throw DataError("cannot hold out " + std::to_string(want_unseen) + " of " +
                        std::to_string(total) + " pairs while covering every primitive");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const Pair p{i, j};
            if (unseen.count(p)) {
                d.val_unseen.push_back(p);
                d.test_unseen.push_back(p);
            } else {
                d.train_pairs.push_back(p);
            }
        }
    }
    d.val_seen = d.train_pairs;
    d.test_seen = d.train_pairs;

    d.samples = SampleStore(spec.dim);
    const std::size_t k = spec.samples_per_pair;
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * k));
    const auto n_val_seen = static_cast<std::size_t>(std::llround(0.2 * k));
    const auto n_val_unseen = static_cast<std::size_t>(std::llround(0.5 * k));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> f(spec.dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const Pair p{i, j};
            const bool is_unseen = unseen.count(p) > 0;
            for (std::size_t s = 0; s < k; ++s) {
                for (std::size_t c = 0; c < spec.dim; ++c) {
                    f[c] = out.state_latents(i, c) + out.object_latents(j, c) + spec.noise * gauss(noise_rng);
                }
                const double len = norm(f);
                if (!(len > 0.0)) throw NumericError("synthetic sample with zero norm");
                for (double& v : f) v /= len;
                Split split;
                if (is_unseen) split = s < n_val_unseen ? Split::val : Split::test;
                else split = s < n_train ? Split::train : (s < n_train + n_val_seen ? Split::val : Split::test);
                d.samples.add("s" + std::to_string(i) + "_o" + std::to_string(j) + "_" + std::to_string(s),
                              f, p, split);
            }
        }
    }
    d.validate();
    return out;
}

}  // namespace dfsp
