#include "refaug/grading.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <regex>
#include <unordered_set>

#include "refaug/gateway.hpp"
#include "refaug/prompt.hpp"

namespace refaug {
namespace {

using boost::multiprecision::cpp_int;

// den is always positive; the sign lives on num.
struct Rational {
    cpp_int num;
    cpp_int den;
};

Rational reduce(Rational r) {
    if (r.den < 0) {
        r.num = -r.num;
        r.den = -r.den;
    }
    cpp_int g = boost::multiprecision::gcd(boost::multiprecision::abs(r.num), r.den);
    if (g > 1) {
        r.num /= g;
        r.den /= g;
    }
    if (r.num == 0) r.den = 1;
    return r;
}

bool rationals_equal(const Rational& a, const Rational& b) {
    return a.num * b.den == b.num * a.den;
}

struct DecimalParts {
    int sign = 1;
    std::string int_part;   // digits only, may be empty
    std::string frac_part;  // digits only, may be empty
    bool has_point = false;
};

std::optional<DecimalParts> parse_decimal_parts(std::string_view s) {
    DecimalParts p;
    std::size_t i = 0;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        p.sign = s[i] == '-' ? -1 : 1;
        ++i;
    }
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        p.int_part.push_back(s[i++]);
    }
    if (i < s.size() && s[i] == '.') {
        p.has_point = true;
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            p.frac_part.push_back(s[i++]);
        }
    }
    if (i != s.size()) return std::nullopt;
    if (p.int_part.empty() && p.frac_part.empty()) return std::nullopt;
    return p;
}

Rational decimal_to_rational(const DecimalParts& p) {
    cpp_int num = 0;
    for (char c : p.int_part) num = num * 10 + (c - '0');
    cpp_int den = 1;
    for (char c : p.frac_part) {
        num = num * 10 + (c - '0');
        den *= 10;
    }
    num *= p.sign;
    return reduce({num, den});
}

/// Canonical rendering of a decimal: no '+', no redundant zeros, "-0" -> "0".
std::string canonical_decimal(const DecimalParts& p) {
    std::string ip = p.int_part;
    ip.erase(0, std::min(ip.find_first_not_of('0'), ip.size()));
    if (ip.empty()) ip = "0";
    std::string fp = p.frac_part;
    while (!fp.empty() && fp.back() == '0') fp.pop_back();
    std::string out = ip;
    if (!fp.empty()) out += "." + fp;
    if (p.sign < 0 && !(ip == "0" && fp.empty())) out.insert(out.begin(), '-');
    return out;
}

std::string canonical_rational(Rational r) {
    r = reduce(r);
    std::string out = r.num.str();
    if (r.den != 1) out += "/" + r.den.str();
    return out;
}

/// "a/b" with integer parts, spaces around '/' tolerated.
std::optional<Rational> parse_slash_fraction(std::string_view s) {
    auto pos = s.find('/');
    if (pos == std::string_view::npos || s.find('/', pos + 1) != std::string_view::npos) {
        return std::nullopt;
    }
    auto lhs = trim(s.substr(0, pos));
    auto rhs = trim(s.substr(pos + 1));
    auto lp = parse_decimal_parts(lhs);
    auto rp = parse_decimal_parts(rhs);
    if (!lp || !rp) return std::nullopt;
    Rational a = decimal_to_rational(*lp);
    Rational b = decimal_to_rational(*rp);
    if (b.num == 0) return std::nullopt;
    return reduce({a.num * b.den, a.den * b.num});
}

std::optional<Rational> parse_rational_text(std::string_view s) {
    if (auto frac = parse_slash_fraction(s)) return frac;
    if (auto dec = parse_decimal_parts(s)) return decimal_to_rational(*dec);
    return std::nullopt;
}

/// Replaces every \boxed{...} (balanced, escape-aware) with its content.
std::string unwrap_boxed(std::string_view s) {
    static constexpr std::string_view marker = "\\boxed{";
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto hit = s.find(marker, pos);
        if (hit == std::string_view::npos) {
            out.append(s.substr(pos));
            return out;
        }
        out.append(s.substr(pos, hit - pos));
        std::size_t i = hit + marker.size();
        int depth = 1;
        bool escaped = false;
        std::string content;
        for (; i < s.size() && depth > 0; ++i) {
            char c = s[i];
            if (escaped) {
                content.push_back(c);
                escaped = false;
                continue;
            }
            if (c == '\\') {
                content.push_back(c);
                escaped = true;
                continue;
            }
            if (c == '{') ++depth;
            if (c == '}') {
                --depth;
                if (depth == 0) break;
            }
            content.push_back(c);
        }
        if (depth != 0) {  // unbalanced; keep the raw text
            out.append(s.substr(hit));
            return out;
        }
        out.append(content);
        pos = i + 1;
    }
}

/// Whole-string \frac{A}{B} (optionally signed, \dfrac/\tfrac accepted) with
/// numeric parts; anything else returns nullopt.
std::optional<Rational> parse_latex_fraction(std::string_view s) {
    int sign = 1;
    s = trim(s);
    if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
        sign = s.front() == '-' ? -1 : 1;
        s = ltrim(s.substr(1));
    }
    for (std::string_view name : {"\\frac", "\\dfrac", "\\tfrac"}) {
        if (s.starts_with(name)) {
            s = ltrim(s.substr(name.size()));
            break;
        }
    }
    if (s.empty() || s.front() != '{') return std::nullopt;

    auto read_group = [&]() -> std::optional<std::string> {
        if (s.empty() || s.front() != '{') return std::nullopt;
        int depth = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '{') ++depth;
            if (s[i] == '}') {
                --depth;
                if (depth == 0) {
                    std::string inner(s.substr(1, i - 1));
                    s = ltrim(s.substr(i + 1));
                    return inner;
                }
            }
        }
        return std::nullopt;
    };

    auto a = read_group();
    if (!a) return std::nullopt;
    auto b = read_group();
    if (!b || !trim(s).empty()) return std::nullopt;
    auto ap = parse_decimal_parts(trim(*a));
    auto bp = parse_decimal_parts(trim(*b));
    if (!ap || !bp) return std::nullopt;
    Rational ra = decimal_to_rational(*ap);
    Rational rb = decimal_to_rational(*bp);
    if (rb.num == 0) return std::nullopt;
    return reduce({cpp_int(sign) * ra.num * rb.den, ra.den * rb.num});
}

/// Drops commas that group thousands (digit before, exactly 3 digits after).
std::string strip_thousands_separators(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == ',' && i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) {
            std::size_t j = i + 1;
            int digits = 0;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
                ++digits;
                ++j;
            }
            bool group_end = j >= s.size() || !std::isdigit(static_cast<unsigned char>(s[j]));
            if (digits == 3 && group_end) continue;
        }
        out.push_back(s[i]);
    }
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

const std::regex& number_regex() {
    static const std::regex re(
        R"([-+]?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)%?)");
    return re;
}

/// Last \boxed{...} content and its start position, if any.
std::optional<std::pair<std::size_t, std::string>> last_boxed_group(std::string_view text) {
    static constexpr std::string_view marker = "\\boxed{";
    auto pos = text.rfind(marker);
    if (pos == std::string_view::npos) return std::nullopt;
    std::size_t i = pos + marker.size();
    int depth = 1;
    bool escaped = false;
    std::string content;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (escaped) {
            content.push_back(c);
            escaped = false;
            continue;
        }
        if (c == '\\') {
            content.push_back(c);
            escaped = true;
            continue;
        }
        if (c == '{') ++depth;
        if (c == '}') {
            --depth;
            if (depth == 0) return std::make_pair(pos, content);
        }
        content.push_back(c);
    }
    return std::nullopt;
}

}  // namespace

std::string truncate_at_stop(std::string_view text, std::string_view stop) {
    if (stop.empty()) return std::string(text);
    auto pos = text.find(stop);
    if (pos == std::string_view::npos) return std::string(text);
    return std::string(text.substr(0, pos));
}

std::optional<std::string> extract_prediction(std::string_view text) {
    static constexpr std::string_view marker = "the answer is";
    std::string lower = to_lower(text);
    auto pos = lower.rfind(marker);
    if (pos != std::string::npos) {
        std::string_view after = text.substr(pos + marker.size());
        while (!after.empty() && (after.front() == ':' || after.front() == ' ' ||
                                  after.front() == '\t')) {
            after.remove_prefix(1);
        }
        std::size_t end = after.size();
        for (std::size_t i = 0; i < after.size(); ++i) {
            char c = after[i];
            if (c == '\n') {
                end = i;
                break;
            }
            if (c == '.') {
                bool decimal_point =
                    i + 1 < after.size() && std::isdigit(static_cast<unsigned char>(after[i + 1]));
                if (decimal_point) continue;
                end = i;
                break;
            }
        }
        auto candidate = trim(after.substr(0, end));
        if (!candidate.empty()) return std::string(candidate);
    }

    // Fallback: the later of the last number-like token / last boxed group.
    std::optional<std::pair<std::size_t, std::string>> best = last_boxed_group(text);
    std::string subject(text);
    auto begin = std::sregex_iterator(subject.begin(), subject.end(), number_regex());
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        auto match_pos = static_cast<std::size_t>(it->position());
        if (!best || match_pos >= best->first) best = {match_pos, it->str()};
    }
    if (best) return best->second;
    return std::nullopt;
}

std::string normalize_answer(std::string_view s) {
    std::string t(trim(s));
    t = replace_all(t, "\\$", "$");
    t = replace_all(t, "\\%", "%");
    std::erase(t, '$');
    t = unwrap_boxed(t);
    t = std::string(trim(t));

    bool percent = false;
    if (!t.empty() && t.back() == '%') {
        t.pop_back();
        t = std::string(rtrim(t));
        percent = true;
    }
    t = strip_thousands_separators(t);
    std::string compact = collapse_whitespace(t);

    std::optional<Rational> rational;
    std::optional<DecimalParts> decimal;
    if (auto latex = parse_latex_fraction(compact)) {
        rational = latex;
    } else if (auto slash = parse_slash_fraction(compact)) {
        rational = slash;
    } else if (auto dec = parse_decimal_parts(compact)) {
        decimal = dec;
    }

    if (percent) {
        if (rational) return canonical_rational({rational->num, rational->den * 100});
        if (decimal) {
            Rational r = decimal_to_rational(*decimal);
            return canonical_rational({r.num, r.den * 100});
        }
        compact.push_back('%');  // not numeric; keep the sign as text
        return to_lower(compact);
    }
    if (rational) return canonical_rational(*rational);
    if (decimal) return canonical_decimal(*decimal);
    return to_lower(compact);
}

bool is_numeric_answer(std::string_view s) {
    return parse_rational_text(normalize_answer(s)).has_value();
}

bool answers_equal(std::string_view a, std::string_view b) {
    std::string na = normalize_answer(a);
    std::string nb = normalize_answer(b);
    if (na == nb) return true;
    auto ra = parse_rational_text(na);
    auto rb = parse_rational_text(nb);
    if (ra && rb) return rationals_equal(*ra, *rb);
    return false;
}

GradeResult grade_generation(std::string id, std::string_view raw_generation,
                             std::string_view gold, std::string_view stop) {
    GradeResult r;
    r.id = std::move(id);
    r.raw_generation = std::string(raw_generation);
    r.truncated = truncate_at_stop(raw_generation, stop);
    r.gold = std::string(gold);
    r.extracted = extract_prediction(r.truncated);
    bool numeric = is_numeric_answer(gold) && (!r.extracted || is_numeric_answer(*r.extracted));
    r.method = numeric ? GradeMethod::numeric : GradeMethod::string;
    if (!r.extracted) {
        r.verdict = Verdict::no_answer;
    } else {
        r.verdict = answers_equal(*r.extracted, gold) ? Verdict::correct : Verdict::incorrect;
    }
    return r;
}

std::optional<std::string> grade_mc(std::string_view prediction, const std::vector<McOption>& options,
                                    Gateway& gateway, const std::string& judge_endpoint,
                                    const PromptTemplate& judge_prompt) {
    if (options.empty()) throw Error("grade_mc: empty option set");
    {
        std::unordered_set<std::string> labels;
        for (const auto& o : options) {
            if (!labels.insert(to_lower(o.label)).second) {
                throw Error("grade_mc: duplicate option label '" + o.label + "'");
            }
        }
    }

    std::string np = normalize_answer(prediction);
    for (const auto& o : options) {
        if (normalize_answer(o.label) == np) return o.label;
    }

    std::string rendered;
    for (const auto& o : options) {
        rendered += o.label + ". " + o.text + "\n";
    }
    std::string prompt = judge_prompt.fill(
        {{"prediction", std::string(prediction)}, {"options", rendered}});

    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest request;
        request.endpoint = judge_endpoint;
        request.messages = {{Role::user, prompt}};
        request.decoding = {0.0, 1.0, 16, {}};
        request.sample_index = attempt;
        ChatResponse response = gateway.chat(request);

        std::string label(trim(response.text));
        auto cut = label.find_first_of(" \t\n.:,)");
        if (cut != std::string::npos) label = label.substr(0, cut);
        for (const auto& o : options) {
            if (iequals(label, o.label)) return o.label;
        }
    }
    return std::nullopt;
}

ScoreSummary score(const std::vector<GradeResult>& results,
                   const std::function<std::string(const GradeResult&)>& source_of) {
    if (results.empty()) throw Error("score: empty result set");
    ScoreSummary s;
    for (const auto& r : results) {
        ++s.total;
        switch (r.verdict) {
            case Verdict::correct: ++s.correct; break;
            case Verdict::incorrect: ++s.incorrect; break;
            case Verdict::no_answer: ++s.no_answer; break;
        }
        if (source_of) {
            auto& [correct, total] = s.by_source[source_of(r)];
            ++total;
            if (r.verdict == Verdict::correct) ++correct;
        }
    }
    s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.total);
    return s;
}

}  // namespace refaug
