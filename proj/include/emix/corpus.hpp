#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "emix/util.hpp"

namespace emix {

// The eleven E-c labels, in the canonical column order of the task files.
inline constexpr std::array<const char*, 11> kEcLabels = {
    "anger",    "anticipation", "disgust", "fear",     "joy",  "love",
    "optimism", "pessimism",    "sadness", "surprise", "trust"};

enum class TaskFamily { ei_reg, ei_oc, v_reg, v_oc, e_c };
enum class Emotion { anger, fear, joy, sadness };
enum class Split { train, dev, test, merged };

inline const char* emotion_name(Emotion e) {
    switch (e) {
        case Emotion::anger: return "anger";
        case Emotion::fear: return "fear";
        case Emotion::joy: return "joy";
        case Emotion::sadness: return "sadness";
    }
    return "";
}

inline Emotion parse_emotion(std::string_view s) {
    if (s == "anger") return Emotion::anger;
    if (s == "fear") return Emotion::fear;
    if (s == "joy") return Emotion::joy;
    if (s == "sadness") return Emotion::sadness;
    throw std::runtime_error("unknown emotion: " + std::string(s));
}

struct TaskKind {
    TaskFamily family;
    std::optional<Emotion> emotion;  // present iff family is ei_reg or ei_oc

    static TaskKind make(TaskFamily f, std::optional<Emotion> e = std::nullopt) {
        bool needs = (f == TaskFamily::ei_reg || f == TaskFamily::ei_oc);
        if (needs != e.has_value())
            throw std::runtime_error("emotion must be present iff task is EI-reg or EI-oc");
        return TaskKind{f, e};
    }

    // Accepts "EI-reg:anger", "EI-oc:fear", "V-reg", "V-oc", "E-c".
    static TaskKind parse(std::string_view s) {
        auto colon = s.find(':');
        std::string_view head = s.substr(0, colon);
        if (head == "EI-reg" || head == "EI-oc") {
            if (colon == std::string_view::npos)
                throw std::runtime_error("EI tasks need an emotion, e.g. EI-reg:anger");
            Emotion e = parse_emotion(s.substr(colon + 1));
            return make(head == "EI-reg" ? TaskFamily::ei_reg : TaskFamily::ei_oc, e);
        }
        if (colon != std::string_view::npos)
            throw std::runtime_error("only EI tasks take an emotion: " + std::string(s));
        if (head == "V-reg") return make(TaskFamily::v_reg);
        if (head == "V-oc") return make(TaskFamily::v_oc);
        if (head == "E-c") return make(TaskFamily::e_c);
        throw std::runtime_error("unknown task: " + std::string(s));
    }

    bool is_regression() const { return family == TaskFamily::ei_reg || family == TaskFamily::v_reg; }
    bool is_ordinal() const { return family == TaskFamily::ei_oc || family == TaskFamily::v_oc; }
    bool is_multilabel() const { return family == TaskFamily::e_c; }

    // Ordinal classes are stored zero-based: EI-oc 0..3, V-oc -3..3 shifted to 0..6.
    int ordinal_class_count() const {
        if (family == TaskFamily::ei_oc) return 4;
        if (family == TaskFamily::v_oc) return 7;
        throw std::runtime_error("not an ordinal task");
    }
    int ordinal_display_offset() const { return family == TaskFamily::v_oc ? -3 : 0; }

    std::string name() const {
        switch (family) {
            case TaskFamily::ei_reg: return std::string("EI-reg:") + emotion_name(*emotion);
            case TaskFamily::ei_oc: return std::string("EI-oc:") + emotion_name(*emotion);
            case TaskFamily::v_reg: return "V-reg";
            case TaskFamily::v_oc: return "V-oc";
            case TaskFamily::e_c: return "E-c";
        }
        return "";
    }

    friend bool operator==(const TaskKind& a, const TaskKind& b) {
        return a.family == b.family && a.emotion == b.emotion;
    }
};

struct Scalar {
    double value = 0.0;
    friend bool operator==(const Scalar&, const Scalar&) = default;
};

struct Ordinal {
    int cls = 0;
    friend bool operator==(const Ordinal&, const Ordinal&) = default;
};

struct LabelSet {
    std::array<bool, 11> bits{};
    int count() const {
        int n = 0;
        for (bool b : bits) n += b ? 1 : 0;
        return n;
    }
    friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

using Target = std::variant<Scalar, Ordinal, LabelSet>;

struct Sample {
    std::string id;
    std::string text;
    std::optional<Target> target;  // absent for unlabeled test rows
};

struct Dataset {
    TaskKind task;
    Split split = Split::train;
    std::vector<Sample> samples;
    std::size_t size() const { return samples.size(); }
};

// Parses "N" or "N: description" ordinal label strings to the leading integer.
inline int parse_ordinal_label(std::string_view label) {
    std::string_view s = trim(label);
    if (s.empty()) throw std::runtime_error("empty ordinal label");
    int value = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc())
        throw std::runtime_error("ordinal label has no leading integer: '" + std::string(label) + "'");
    std::string_view rest = trim(std::string_view(res.ptr, static_cast<std::size_t>(s.data() + s.size() - res.ptr)));
    if (!rest.empty() && rest.front() != ':')
        throw std::runtime_error("malformed ordinal label: '" + std::string(label) + "'");
    return value;
}

namespace detail {

inline const char* reg_header() { return "ID\tTweet\tAffect Dimension\tIntensity Score"; }
inline const char* oc_header() { return "ID\tTweet\tAffect Dimension\tIntensity Class"; }

inline std::string ec_header() {
    std::string h = "ID\tTweet";
    for (const char* l : kEcLabels) {
        h += '\t';
        h += l;
    }
    return h;
}

inline std::string expected_header(const TaskKind& task) {
    if (task.is_regression()) return reg_header();
    if (task.is_ordinal()) return oc_header();
    return ec_header();
}

inline std::runtime_error row_error(const std::string& path, std::size_t line_no, const std::string& msg) {
    return std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
}

}  // namespace detail

inline Dataset load_tsv(const std::string& path, const TaskKind& task, Split split_kind = Split::train) {
    auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": empty file (missing header)");
    if (lines.front() != detail::expected_header(task))
        throw std::runtime_error(path + ": unknown header for task " + task.name() + ": '" + lines.front() + "'");

    std::size_t ncols = task.is_multilabel() ? 2 + kEcLabels.size() : 4;
    Dataset ds{task, split_kind, {}};
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::size_t line_no = i + 1;
        if (lines[i].empty()) continue;
        auto cols = split(lines[i], '\t');
        if (cols.size() != ncols)
            throw detail::row_error(path, line_no,
                                    "expected " + std::to_string(ncols) + " columns, got " + std::to_string(cols.size()));
        Sample s;
        s.id = cols[0];
        s.text = cols[1];
        if (s.id.empty()) throw detail::row_error(path, line_no, "empty sample id");
        if (!seen.insert(s.id).second) throw detail::row_error(path, line_no, "duplicate sample id '" + s.id + "'");

        if (task.is_regression()) {
            if (cols[3] != "NONE") {
                double v;
                try {
                    v = parse_double(cols[3], "intensity score");
                } catch (const std::exception& e) {
                    throw detail::row_error(path, line_no, e.what());
                }
                if (v < 0.0 || v > 1.0)
                    throw detail::row_error(path, line_no, "intensity score " + cols[3] + " outside [0,1]");
                s.target = Scalar{v};
            }
        } else if (task.is_ordinal()) {
            if (cols[3] != "NONE") {
                int raw;
                try {
                    raw = parse_ordinal_label(cols[3]);
                } catch (const std::exception& e) {
                    throw detail::row_error(path, line_no, e.what());
                }
                int lo = task.ordinal_display_offset();
                int hi = lo + task.ordinal_class_count() - 1;
                if (raw < lo || raw > hi)
                    throw detail::row_error(path, line_no, "ordinal class " + std::to_string(raw) + " outside [" +
                                                               std::to_string(lo) + "," + std::to_string(hi) + "]");
                s.target = Ordinal{raw - lo};
            }
        } else {
            if (cols[2] == "NONE") {
                for (std::size_t j = 3; j < ncols; ++j)
                    if (cols[j] != "NONE")
                        throw detail::row_error(path, line_no, "mixed NONE and label values");
            } else {
                LabelSet ls;
                for (std::size_t j = 0; j < kEcLabels.size(); ++j) {
                    const std::string& c = cols[2 + j];
                    if (c == "0")
                        ls.bits[j] = false;
                    else if (c == "1")
                        ls.bits[j] = true;
                    else
                        throw detail::row_error(path, line_no, "label column '" + std::string(kEcLabels[j]) +
                                                                   "' must be 0 or 1, got '" + c + "'");
                }
                s.target = ls;
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

inline std::string serialize_tsv(const Dataset& ds) {
    std::string out = detail::expected_header(ds.task);
    out += '\n';
    const char* dim = "valence";
    if (ds.task.emotion) dim = emotion_name(*ds.task.emotion);
    for (const Sample& s : ds.samples) {
        out += s.id;
        out += '\t';
        out += s.text;
        if (ds.task.is_multilabel()) {
            if (!s.target) {
                for (std::size_t j = 0; j < kEcLabels.size(); ++j) out += "\tNONE";
            } else {
                const auto& ls = std::get<LabelSet>(*s.target);
                for (bool b : ls.bits) out += b ? "\t1" : "\t0";
            }
        } else {
            out += '\t';
            out += dim;
            out += '\t';
            if (!s.target) {
                out += "NONE";
            } else if (ds.task.is_regression()) {
                out += fmt_double(std::get<Scalar>(*s.target).value);
            } else {
                out += std::to_string(std::get<Ordinal>(*s.target).cls + ds.task.ordinal_display_offset());
            }
        }
        out += '\n';
    }
    return out;
}

inline void save_tsv(const Dataset& ds, const std::string& path) { write_file(path, serialize_tsv(ds)); }

inline Dataset merge(const Dataset& train, const Dataset& dev) {
    if (!(train.task == dev.task))
        throw std::runtime_error("cannot merge datasets of different tasks: " + train.task.name() + " vs " +
                                 dev.task.name());
    Dataset out{train.task, Split::merged, {}};
    out.samples.reserve(train.samples.size() + dev.samples.size());
    std::unordered_set<std::string> seen;
    for (const auto* part : {&train, &dev}) {
        for (const Sample& s : part->samples) {
            if (!seen.insert(s.id).second)
                throw std::runtime_error("duplicate sample id across splits: '" + s.id + "'");
            out.samples.push_back(s);
        }
    }
    return out;
}

}  // namespace emix
