#include "tsynth/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "tsynth/instance_io.hpp"

namespace tsynth {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

constexpr char kFileMagic[8] = {'T', 'S', 'Y', 'N', 'D', 'S', 'E', 'T'};
constexpr char kEpisodeMagic[4] = {'E', 'P', 'I', 'S'};
constexpr char kTrailerMagic[4] = {'T', 'E', 'N', 'D'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    hash_ = fnv1a(std::string_view(static_cast<const char*>(p), n), hash_);
  }
  template <class T>
  void pod(const T& v) {
    bytes(&v, sizeof v);
  }
  void doubles(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
  void zeros(std::size_t n) {
    const char z[8] = {};
    bytes(z, n);
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::ostream& out_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DatasetIntegrityError("dataset is truncated");
    hash_ = fnv1a(std::string_view(static_cast<const char*>(p), n), hash_);
  }
  template <class T>
  T pod() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }
  std::vector<double> doubles(std::size_t n) {
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  void skip(std::size_t n) {
    char z[8];
    bytes(z, n);
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::istream& in_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string_view view(const void* p, std::size_t n) { return {static_cast<const char*>(p), n}; }

}  // namespace

std::uint64_t episode_chain_seed(const Episode& e) {
  std::uint64_t h = fnv1a(view(&e.seed, sizeof e.seed));
  if (!e.records.empty()) {
    const auto& s = e.records.front().state;
    h = fnv1a(view(s.data(), s.size() * sizeof(double)), h);
  }
  return h;
}

std::uint64_t record_chain_hash(std::uint64_t previous, const TransitionRecord& r) {
  std::uint64_t h = fnv1a(view(r.action.data(), r.action.size() * sizeof(double)), previous);
  h = fnv1a(view(&r.reward, sizeof r.reward), h);
  const std::uint8_t flags[2] = {static_cast<std::uint8_t>(r.terminated), static_cast<std::uint8_t>(r.cause)};
  h = fnv1a(view(flags, 2), h);
  return fnv1a(view(r.next.data(), r.next.size() * sizeof(double)), h);
}

void write_dataset(std::ostream& out, const std::vector<Episode>& episodes, const MdpModel& model) {
  Writer w(out);
  std::uint64_t transitions = 0;
  for (const auto& e : episodes) transitions += e.records.size();
  w.bytes(kFileMagic, 8);
  w.pod(kDatasetVersion);
  w.pod(static_cast<std::uint32_t>(model.state_size()));
  w.pod(static_cast<std::uint32_t>(model.action_size()));
  w.zeros(4);
  w.pod(traffic_hash(model.roster()));
  w.pod(static_cast<std::uint64_t>(episodes.size()));
  w.pod(transitions);
  for (const auto& e : episodes) {
    if (e.records.empty()) throw std::invalid_argument("cannot store an empty episode");
    w.bytes(kEpisodeMagic, 4);
    w.pod(static_cast<std::uint8_t>(e.source));
    w.zeros(3);
    w.pod(e.seed);
    w.pod(static_cast<std::uint32_t>(e.records.size()));
    w.zeros(4);
    w.pod(e.cumulative_reward());
    w.doubles(e.records.front().state);
    std::uint64_t chain = episode_chain_seed(e);
    for (const auto& r : e.records) {
      if (r.action.size() != model.action_size() || r.next.size() != model.state_size()) {
        throw std::invalid_argument("record dimensions differ from the model");
      }
      chain = record_chain_hash(chain, r);
      w.doubles(r.action);
      w.pod(r.reward);
      w.pod(static_cast<std::uint8_t>(r.terminated));
      w.pod(static_cast<std::uint8_t>(r.cause));
      w.zeros(6);
      w.doubles(r.next);
      w.pod(chain);
    }
  }
  const std::uint64_t body = w.hash();
  w.bytes(kTrailerMagic, 4);
  w.zeros(4);
  w.pod(body);
  if (!out) throw std::runtime_error("dataset write failed");
}

Dataset read_dataset(std::istream& in) {
  Reader r(in);
  Dataset d;
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kFileMagic, 8) != 0) throw DatasetIntegrityError("not a dataset file");
  d.header.version = r.pod<std::uint32_t>();
  if (d.header.version != kDatasetVersion) {
    throw DatasetIntegrityError("unsupported dataset version " + std::to_string(d.header.version));
  }
  d.header.state_size = r.pod<std::uint32_t>();
  d.header.action_size = r.pod<std::uint32_t>();
  r.skip(4);
  d.header.traffic_hash = r.pod<std::uint64_t>();
  d.header.episode_count = r.pod<std::uint64_t>();
  d.header.transition_count = r.pod<std::uint64_t>();
  std::uint64_t transitions = 0;
  for (std::uint64_t i = 0; i < d.header.episode_count; ++i) {
    char em[4];
    r.bytes(em, 4);
    if (std::memcmp(em, kEpisodeMagic, 4) != 0) throw DatasetIntegrityError("episode frame " + std::to_string(i) + " is corrupt");
    Episode e;
    const auto source = r.pod<std::uint8_t>();
    if (source > 1) throw DatasetIntegrityError("unknown episode source");
    e.source = static_cast<EpisodeSource>(source);
    r.skip(3);
    e.seed = r.pod<std::uint64_t>();
    const auto length = r.pod<std::uint32_t>();
    r.skip(4);
    const auto cumulative = r.pod<double>();
    MdpState state = r.doubles(d.header.state_size);
    Episode probe;
    probe.seed = e.seed;
    probe.records.push_back({state, {}, 0, {}, false, StepCause::None});
    std::uint64_t chain = episode_chain_seed(probe);
    for (std::uint32_t k = 0; k < length; ++k) {
      TransitionRecord rec;
      rec.state = state;
      rec.action = r.doubles(d.header.action_size);
      rec.reward = r.pod<double>();
      const auto term = r.pod<std::uint8_t>();
      const auto cause = r.pod<std::uint8_t>();
      if (term > 1 || cause > 3) throw DatasetIntegrityError("bad record flags");
      rec.terminated = term == 1;
      rec.cause = static_cast<StepCause>(cause);
      r.skip(6);
      rec.next = r.doubles(d.header.state_size);
      chain = record_chain_hash(chain, rec);
      if (r.pod<std::uint64_t>() != chain) {
        throw DatasetIntegrityError("chain hash mismatch in episode " + std::to_string(i) + ", record " +
                                    std::to_string(k));
      }
      state = rec.next;
      e.records.push_back(std::move(rec));
    }
    if (e.cumulative_reward() != cumulative) {
      throw DatasetIntegrityError("cumulative reward mismatch in episode " + std::to_string(i));
    }
    transitions += length;
    d.episodes.push_back(std::move(e));
  }
  if (transitions != d.header.transition_count) throw DatasetIntegrityError("transition count mismatch");
  const std::uint64_t body = r.hash();
  char tm[4];
  r.bytes(tm, 4);
  if (std::memcmp(tm, kTrailerMagic, 4) != 0) throw DatasetIntegrityError("missing trailer");
  r.skip(4);
  if (r.pod<std::uint64_t>() != body) throw DatasetIntegrityError("file hash mismatch");
  if (in.peek() != std::char_traits<char>::eof()) throw DatasetIntegrityError("trailing bytes after the trailer");
  return d;
}

void export_dataset(const std::filesystem::path& file, const std::vector<Episode>& episodes, const MdpModel& model) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  write_dataset(out, episodes, model);
}

Dataset import_dataset(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  return read_dataset(in);
}

}  // namespace tsynth
