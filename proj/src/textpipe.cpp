#include "propdet/textpipe.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "propdet/corpus.hpp"
#include "propdet/errors.hpp"

namespace propdet {

namespace {

struct CodePoint {
    char32_t cp;
    std::size_t len;  // bytes consumed; invalid sequences consume one byte
    bool valid;
};

CodePoint decode(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1, true};
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
    else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
    else return {0xFFFD, 1, false};
    if (i + len > s.size()) return {0xFFFD, 1, false};
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return {0xFFFD, 1, false};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len, true};
}

void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_word_char(const CodePoint& c) {
    if (!c.valid) return false;
    const char32_t cp = c.cp;
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z');
    }
    if (cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;   // punctuation, symbols, arrows
    if (cp >= 0x3000 && cp <= 0x303F) return false;   // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return false; // emoji and pictographs
    return true;
}

bool is_apostrophe(char32_t cp) { return cp == '\'' || cp == 0x2019; }
bool is_terminal(char32_t cp) { return cp == '.' || cp == '!' || cp == '?'; }
bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
           cp == 0xA0 || cp == 0x2028 || cp == 0x2029;
}

char32_t lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    return cp;
}

bool upper(char32_t cp) { return lower(cp) != cp; }

}  // namespace

std::string to_string(TaggerMode m) {
    switch (m) {
        case TaggerMode::heuristic: return "heuristic";
        case TaggerMode::list: return "list";
        case TaggerMode::external_tags: return "external_tags";
    }
    return "heuristic";
}

TaggerMode parse_tagger_mode(const std::string& s) {
    if (s == "heuristic") return TaggerMode::heuristic;
    if (s == "list") return TaggerMode::list;
    if (s == "external_tags") return TaggerMode::external_tags;
    throw ConfigError("unknown proper-noun tagger mode '" + s + "'");
}

ProperNounTagger ProperNounTagger::heuristic(const std::set<std::string>& lexicon) {
    ProperNounTagger t;
    t.mode = TaggerMode::heuristic;
    for (const auto& w : lexicon) t.lexicon.insert(fold_case(w));
    return t;
}

ProperNounTagger ProperNounTagger::list(const std::set<std::string>& lexicon) {
    ProperNounTagger t = heuristic(lexicon);
    t.mode = TaggerMode::list;
    return t;
}

ProperNounTagger ProperNounTagger::external(std::map<std::string, std::vector<std::string>> tags) {
    ProperNounTagger t;
    t.mode = TaggerMode::external_tags;
    t.tags = std::move(tags);
    return t;
}

std::string fold_case(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        const auto c = decode(s, i);
        if (c.valid) encode(lower(c.cp), out);
        else out.append(s.substr(i, c.len));
        i += c.len;
    }
    return out;
}

bool is_capitalized(std::string_view s) {
    if (s.empty()) return false;
    const auto c = decode(s, 0);
    return c.valid && upper(c.cp);
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::string current;
    bool sentence_start = true;  // the first token of a text opens a sentence
    bool saw_terminal = false;   // '.', '!' or '?' seen in the current gap
    bool in_token = false;

    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back({std::move(current), tokens.size(), sentence_start});
            current.clear();
            sentence_start = false;
        }
        in_token = false;
    };

    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = decode(text, i);
        if (is_word_char(c)) {
            current.append(text.substr(i, c.len));
            in_token = true;
            saw_terminal = false;
        } else if (in_token && c.valid && is_apostrophe(c.cp) && i + c.len < text.size() &&
                   is_word_char(decode(text, i + c.len))) {
            current.append(text.substr(i, c.len));
        } else {
            flush();
            if (c.valid && is_terminal(c.cp)) saw_terminal = true;
            else if (c.valid && is_space(c.cp) && saw_terminal) {
                sentence_start = true;
                saw_terminal = false;
            }
        }
        i += c.len;
    }
    flush();
    return tokens;
}

std::vector<Token> strip_proper_nouns(const std::vector<Token>& tokens, const ProperNounTagger& tagger,
                                      const std::string& doc_id) {
    const std::vector<std::string>* tags = nullptr;
    if (tagger.mode == TaggerMode::external_tags) {
        const auto it = tagger.tags.find(doc_id);
        if (it == tagger.tags.end())
            throw DataError("no proper-noun tags for document '" + doc_id + "'");
        if (it->second.size() != tokens.size())
            throw DataError("tag count " + std::to_string(it->second.size()) + " != token count " +
                            std::to_string(tokens.size()) + " for document '" + doc_id + "'");
        tags = &it->second;
    }

    std::vector<Token> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Token& t = tokens[i];
        bool drop = false;
        switch (tagger.mode) {
            case TaggerMode::heuristic: {
                // The pronoun "I" (and its contractions) is capitalized everywhere.
                const bool pronoun_i = t.surface == "I" || t.surface.rfind("I'", 0) == 0 ||
                                       t.surface.rfind("I’", 0) == 0;
                drop = (is_capitalized(t.surface) && !t.sentence_initial && !pronoun_i) ||
                       tagger.lexicon.count(fold_case(t.surface)) > 0;
                break;
            }
            case TaggerMode::list:
                drop = tagger.lexicon.count(fold_case(t.surface)) > 0;
                break;
            case TaggerMode::external_tags:
                drop = (*tags)[i].rfind("NNP", 0) == 0;
                break;
        }
        if (!drop) out.push_back({t.surface, out.size(), t.sentence_initial});
    }
    return out;
}

std::vector<std::string> ngrams(const std::vector<Token>& tokens, std::size_t n) {
    std::vector<std::string> out;
    if (n == 0 || tokens.size() < n) return out;
    out.reserve(tokens.size() - n + 1);
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string g = fold_case(tokens[i].surface);
        for (std::size_t k = 1; k < n; ++k) {
            g += ' ';
            g += fold_case(tokens[i + k].surface);
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<std::string> folded_surfaces(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(fold_case(t.surface));
    return out;
}

std::vector<Token> prepare_tokens(const Document& doc, const ProperNounTagger* tagger) {
    auto tokens = tokenize(doc.text);
    if (tagger) tokens = strip_proper_nouns(tokens, *tagger, doc.id);
    return tokens;
}

std::map<std::string, std::vector<std::string>> load_tag_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tag sidecar " + path.string());
    std::map<std::string, std::vector<std::string>> tags;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            tags[obj.at("id").get<std::string>()] = obj.at("tags").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return tags;
}

std::set<std::string> load_word_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open word list " + path.string());
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t\r");
        words.insert(fold_case(line.substr(b, e - b + 1)));
    }
    return words;
}

}  // namespace propdet
