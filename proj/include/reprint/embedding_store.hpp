#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "reprint/errors.hpp"

namespace reprint {

static_assert(std::endian::native == std::endian::little,
              "binary embedding IO assumes a little-endian host");

/// Ordered list of K >= 2 distinct, non-empty class names.
class ClassVocabulary {
public:
    explicit ClassVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.size() < 2) {
            throw VocabError("vocabulary needs at least 2 classes, got " + std::to_string(names_.size()));
        }
        std::unordered_set<std::string> seen;
        for (const auto& n : names_) {
            if (n.empty()) throw VocabError("empty class name");
            if (!seen.insert(n).second) throw VocabError("duplicate class name '" + n + "'");
        }
    }

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(std::size_t id) const { return names_.at(id); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    std::optional<std::uint32_t> find(std::string_view name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) return std::nullopt;
        return static_cast<std::uint32_t>(it - names_.begin());
    }

    friend bool operator==(const ClassVocabulary&, const ClassVocabulary&) = default;

private:
    std::vector<std::string> names_;
};

namespace detail {

inline void check_finite(std::span<const float> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw DataError(std::string("non-finite ") + what + " component at flat index " + std::to_string(i));
        }
    }
}

inline void check_soft_labels(std::span<const float> labels, std::size_t k) {
    for (std::size_t r = 0; r * k < labels.size(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            float v = labels[r * k + c];
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
                throw DataError("soft label entry out of [0,1] in record " + std::to_string(r));
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw DataError("soft label of record " + std::to_string(r) + " sums to " + std::to_string(sum));
        }
    }
}

} // namespace detail

/// n labeled d-dimensional f32 vectors stored row-major. Immutable.
class LabeledEmbeddingSet {
public:
    LabeledEmbeddingSet(std::size_t dim, ClassVocabulary vocab, std::vector<std::uint32_t> labels,
                        std::vector<float> values)
        : dim_(dim), vocab_(std::move(vocab)), labels_(std::move(labels)), values_(std::move(values)) {
        if (dim_ == 0) throw DimError("embedding dimension must be positive");
        if (values_.size() != labels_.size() * dim_) {
            throw DimError("value buffer holds " + std::to_string(values_.size()) + " floats, expected " +
                           std::to_string(labels_.size() * dim_));
        }
        for (auto l : labels_) {
            if (l >= vocab_.size()) throw VocabError("label id " + std::to_string(l) + " outside vocabulary");
        }
        detail::check_finite(values_, "vector");
    }

    std::size_t dim() const noexcept { return dim_; }
    const ClassVocabulary& vocab() const noexcept { return vocab_; }
    std::size_t num_classes() const noexcept { return vocab_.size(); }
    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }

    std::uint32_t label(std::size_t i) const { return labels_.at(i); }
    std::span<const float> row(std::size_t i) const {
        return std::span<const float>(values_).subspan(i * dim_, dim_);
    }
    std::span<const std::uint32_t> labels() const noexcept { return labels_; }
    std::span<const float> values() const noexcept { return values_; }

    /// Record indices of class `c`, in record order.
    std::vector<std::size_t> members(std::size_t c) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (labels_[i] == c) out.push_back(i);
        }
        return out;
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes(), 0);
        for (auto l : labels_) ++counts[l];
        return counts;
    }

    /// Bitwise equality of the f32 payload.
    friend bool operator==(const LabeledEmbeddingSet& a, const LabeledEmbeddingSet& b) {
        return a.dim_ == b.dim_ && a.vocab_ == b.vocab_ && a.labels_ == b.labels_ &&
               a.values_.size() == b.values_.size() &&
               std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
    }

private:
    std::size_t dim_;
    ClassVocabulary vocab_;
    std::vector<std::uint32_t> labels_;
    std::vector<float> values_;
};

/// Vectors paired with K-simplex label distributions. Immutable.
class SoftLabeledSet {
public:
    SoftLabeledSet(std::size_t dim, ClassVocabulary vocab, std::vector<float> soft_labels, std::vector<float> values)
        : dim_(dim), vocab_(std::move(vocab)), soft_labels_(std::move(soft_labels)), values_(std::move(values)) {
        if (dim_ == 0) throw DimError("embedding dimension must be positive");
        const std::size_t k = vocab_.size();
        if (soft_labels_.size() % k != 0) throw DimError("soft label buffer is not a multiple of K");
        if (values_.size() != (soft_labels_.size() / k) * dim_) {
            throw DimError("value buffer does not match record count");
        }
        detail::check_soft_labels(soft_labels_, k);
        detail::check_finite(values_, "vector");
    }

    std::size_t dim() const noexcept { return dim_; }
    const ClassVocabulary& vocab() const noexcept { return vocab_; }
    std::size_t num_classes() const noexcept { return vocab_.size(); }
    std::size_t size() const noexcept { return soft_labels_.size() / vocab_.size(); }
    bool empty() const noexcept { return soft_labels_.empty(); }

    std::span<const float> soft_label(std::size_t i) const {
        return std::span<const float>(soft_labels_).subspan(i * num_classes(), num_classes());
    }
    std::span<const float> row(std::size_t i) const {
        return std::span<const float>(values_).subspan(i * dim_, dim_);
    }
    std::span<const float> soft_labels() const noexcept { return soft_labels_; }
    std::span<const float> values() const noexcept { return values_; }

    /// Index of the largest label weight; ties go to the lowest class index.
    std::uint32_t argmax(std::size_t i) const {
        auto y = soft_label(i);
        return static_cast<std::uint32_t>(std::max_element(y.begin(), y.end()) - y.begin());
    }

    friend bool operator==(const SoftLabeledSet& a, const SoftLabeledSet& b) {
        auto bits_equal = [](const std::vector<float>& x, const std::vector<float>& y) {
            return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
        };
        return a.dim_ == b.dim_ && a.vocab_ == b.vocab_ && bits_equal(a.soft_labels_, b.soft_labels_) &&
               bits_equal(a.values_, b.values_);
    }

private:
    std::size_t dim_;
    ClassVocabulary vocab_;
    std::vector<float> soft_labels_;
    std::vector<float> values_;
};

/// One-hot encoding of a hard-labeled set.
inline SoftLabeledSet to_soft(const LabeledEmbeddingSet& set) {
    const std::size_t k = set.num_classes();
    std::vector<float> y(set.size() * k, 0.0f);
    for (std::size_t i = 0; i < set.size(); ++i) y[i * k + set.label(i)] = 1.0f;
    return SoftLabeledSet(set.dim(), set.vocab(), std::move(y),
                          std::vector<float>(set.values().begin(), set.values().end()));
}

/// Argmax decoding of a soft-labeled set.
inline LabeledEmbeddingSet to_hard(const SoftLabeledSet& set) {
    std::vector<std::uint32_t> labels(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) labels[i] = set.argmax(i);
    return LabeledEmbeddingSet(set.dim(), set.vocab(), std::move(labels),
                               std::vector<float>(set.values().begin(), set.values().end()));
}

inline SoftLabeledSet concat(const SoftLabeledSet& a, const SoftLabeledSet& b) {
    if (a.dim() != b.dim()) throw DimError("cannot concatenate sets of different dimension");
    if (!(a.vocab() == b.vocab())) throw VocabError("cannot concatenate sets with different vocabularies");
    std::vector<float> y(a.soft_labels().begin(), a.soft_labels().end());
    y.insert(y.end(), b.soft_labels().begin(), b.soft_labels().end());
    std::vector<float> v(a.values().begin(), a.values().end());
    v.insert(v.end(), b.values().begin(), b.values().end());
    return SoftLabeledSet(a.dim(), a.vocab(), std::move(y), std::move(v));
}

/// Records at `indices`, in the given order.
inline LabeledEmbeddingSet subset(const LabeledEmbeddingSet& set, std::span<const std::size_t> indices) {
    std::vector<std::uint32_t> labels;
    std::vector<float> values;
    labels.reserve(indices.size());
    values.reserve(indices.size() * set.dim());
    for (auto i : indices) {
        labels.push_back(set.label(i));
        auto r = set.row(i);
        values.insert(values.end(), r.begin(), r.end());
    }
    return LabeledEmbeddingSet(set.dim(), set.vocab(), std::move(labels), std::move(values));
}

// ---------------------------------------------------------------------------
// File formats
//
// EMB1 (hard labels):  "EMBV" u32 version=1, u32 n, u32 d, u32 K,
//                      K x (u32 byte length, UTF-8 name),
//                      n x (u32 label_id, d x f32)
// EMBS (soft labels):  "EMBS" and the same header,
//                      n x (K x f32 label weights, d x f32)
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

enum class EmbeddingFormat { binary, jsonl };

inline constexpr std::array<char, 4> kHardMagic{'E', 'M', 'B', 'V'};
inline constexpr std::array<char, 4> kSoftMagic{'E', 'M', 'B', 'S'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

/// Format implied by a file extension: ".jsonl" / ".json" are JSONL, anything else binary.
inline EmbeddingFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    return (ext == ".jsonl" || ext == ".json") ? EmbeddingFormat::jsonl : EmbeddingFormat::binary;
}

inline std::optional<EmbeddingFormat> parse_format(std::string_view s) {
    if (s == "binary" || s == "bin" || s == "emb") return EmbeddingFormat::binary;
    if (s == "jsonl") return EmbeddingFormat::jsonl;
    return std::nullopt;
}

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void raw(const void* p, std::size_t n) {
        auto c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    const std::vector<char>& buffer() const noexcept { return buf_; }

private:
    std::vector<char> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const char> data) : data_(data) {}

    std::uint32_t u32() {
        std::uint32_t v;
        take(&v, sizeof v);
        return v;
    }
    float f32() {
        float v;
        take(&v, sizeof v);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void take(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError("truncated file");
    }

    std::span<const char> data_;
    std::size_t pos_ = 0;
};

inline std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void dump(const std::filesystem::path& path, std::span<const char> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void write_header(ByteWriter& w, const std::array<char, 4>& magic, std::size_t n, std::size_t d,
                         const ClassVocabulary& vocab) {
    w.raw(magic.data(), magic.size());
    w.u32(kEmbeddingVersion);
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(vocab.size()));
    for (const auto& name : vocab.names()) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
    }
}

struct BinaryHeader {
    std::size_t n;
    std::size_t d;
    std::vector<std::string> names;
};

inline BinaryHeader read_header(ByteReader& r, const std::array<char, 4>& magic) {
    std::array<char, 4> got{};
    r.take(got.data(), got.size());
    if (got != magic) {
        throw FormatError("bad magic bytes, expected '" + std::string(magic.begin(), magic.end()) + "'");
    }
    if (auto v = r.u32(); v != kEmbeddingVersion) throw FormatError("unsupported version " + std::to_string(v));
    BinaryHeader h;
    h.n = r.u32();
    h.d = r.u32();
    const std::size_t k = r.u32();
    if (h.d == 0) throw FormatError("dimension 0 in header");
    if (k < 2) throw FormatError("vocabulary size " + std::to_string(k) + " in header");
    for (std::size_t c = 0; c < k; ++c) {
        auto len = r.u32();
        h.names.push_back(r.str(len));
    }
    return h;
}

} // namespace detail

inline void write_embeddings(const LabeledEmbeddingSet& set, const std::filesystem::path& path,
                             EmbeddingFormat format = EmbeddingFormat::binary) {
    if (format == EmbeddingFormat::binary) {
        detail::ByteWriter w;
        detail::write_header(w, kHardMagic, set.size(), set.dim(), set.vocab());
        for (std::size_t i = 0; i < set.size(); ++i) {
            w.u32(set.label(i));
            for (float v : set.row(i)) w.f32(v);
        }
        detail::dump(path, w.buffer());
        return;
    }
    std::string text = nlohmann::json{{"dim", set.dim()}, {"classes", set.vocab().names()}}.dump() + "\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        nlohmann::json vec = nlohmann::json::array();
        for (float v : set.row(i)) vec.push_back(static_cast<double>(v));
        text += nlohmann::json{{"label", set.vocab().name(set.label(i))}, {"vec", std::move(vec)}}.dump();
        text += "\n";
    }
    detail::dump(path, text);
}

inline LabeledEmbeddingSet read_embeddings(const std::filesystem::path& path,
                                           EmbeddingFormat format = EmbeddingFormat::binary) {
    const auto bytes = detail::slurp(path);
    if (format == EmbeddingFormat::binary) {
        detail::ByteReader r(bytes);
        auto h = detail::read_header(r, kHardMagic);
        ClassVocabulary vocab(std::move(h.names));
        const std::size_t record = 4 + 4 * h.d;
        if (r.remaining() != h.n * record) {
            throw FormatError("payload holds " + std::to_string(r.remaining()) + " bytes, header promises " +
                              std::to_string(h.n * record));
        }
        std::vector<std::uint32_t> labels(h.n);
        std::vector<float> values(h.n * h.d);
        for (std::size_t i = 0; i < h.n; ++i) {
            labels[i] = r.u32();
            if (labels[i] >= vocab.size()) {
                throw VocabError("record " + std::to_string(i) + " has label id " + std::to_string(labels[i]));
            }
            r.take(values.data() + i * h.d, 4 * h.d);
        }
        return LabeledEmbeddingSet(h.d, std::move(vocab), std::move(labels), std::move(values));
    }

    std::string_view text(bytes.data(), bytes.size());
    std::optional<ClassVocabulary> vocab;
    std::size_t dim = 0;
    std::vector<std::uint32_t> labels;
    std::vector<float> values;
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto eol = text.find('\n');
        auto line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            if (!vocab) {
                dim = j.at("dim").get<std::size_t>();
                if (dim == 0) throw FormatError("dimension 0 in header line");
                vocab.emplace(j.at("classes").get<std::vector<std::string>>());
                continue;
            }
            auto name = j.at("label").get<std::string>();
            auto id = vocab->find(name);
            if (!id) throw VocabError("line " + std::to_string(line_no) + ": unknown label '" + name + "'");
            const auto& vec = j.at("vec");
            if (!vec.is_array() || vec.size() != dim) {
                throw FormatError("line " + std::to_string(line_no) + ": vector length differs from dim");
            }
            labels.push_back(*id);
            for (const auto& v : vec) {
                float f = static_cast<float>(v.get<double>());
                if (!std::isfinite(f)) throw DataError("line " + std::to_string(line_no) + ": non-finite component");
                values.push_back(f);
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!vocab) throw FormatError("missing JSONL header line");
    return LabeledEmbeddingSet(dim, std::move(*vocab), std::move(labels), std::move(values));
}

inline void write_soft(const SoftLabeledSet& set, const std::filesystem::path& path) {
    detail::ByteWriter w;
    detail::write_header(w, kSoftMagic, set.size(), set.dim(), set.vocab());
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (float v : set.soft_label(i)) w.f32(v);
        for (float v : set.row(i)) w.f32(v);
    }
    detail::dump(path, w.buffer());
}

inline SoftLabeledSet read_soft(const std::filesystem::path& path) {
    const auto bytes = detail::slurp(path);
    detail::ByteReader r(bytes);
    auto h = detail::read_header(r, kSoftMagic);
    ClassVocabulary vocab(std::move(h.names));
    const std::size_t k = vocab.size();
    if (r.remaining() != h.n * 4 * (k + h.d)) throw FormatError("payload size does not match header");
    std::vector<float> y(h.n * k);
    std::vector<float> values(h.n * h.d);
    for (std::size_t i = 0; i < h.n; ++i) {
        r.take(y.data() + i * k, 4 * k);
        r.take(values.data() + i * h.d, 4 * h.d);
    }
    return SoftLabeledSet(h.d, std::move(vocab), std::move(y), std::move(values));
}

/// Reads either an EMB1 or an EMBS binary file, or a JSONL file, as soft labels.
inline SoftLabeledSet read_any_soft(const std::filesystem::path& path) {
    if (format_from_path(path) == EmbeddingFormat::jsonl) {
        return to_soft(read_embeddings(path, EmbeddingFormat::jsonl));
    }
    std::array<char, 4> magic{};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
        in.read(magic.data(), magic.size());
    }
    if (magic == kSoftMagic) return read_soft(path);
    return to_soft(read_embeddings(path, EmbeddingFormat::binary));
}

} // namespace reprint
