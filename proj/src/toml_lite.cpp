#include "propdet/toml_lite.hpp"

#include <charconv>
#include <string>
#include <vector>

#include "propdet/errors.hpp"

namespace propdet {

using nlohmann::json;

namespace {

class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    json run() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                ++pos_;
                if (peek() == '[') fail("arrays of tables are not supported");
                skip_ws();
                const auto path = key_path();
                skip_ws();
                expect(']');
                table = &root;
                for (const auto& k : path) {
                    json& next = (*table)[k];
                    if (next.is_null()) next = json::object();
                    if (!next.is_object()) fail("'" + k + "' is not a table");
                    table = &next;
                }
            } else {
                const auto path = key_path();
                skip_ws();
                expect('=');
                skip_ws();
                json* target = table;
                for (std::size_t i = 0; i + 1 < path.size(); ++i) {
                    json& next = (*target)[path[i]];
                    if (next.is_null()) next = json::object();
                    if (!next.is_object()) fail("'" + path[i] + "' is not a table");
                    target = &next;
                }
                if (target->contains(path.back())) fail("duplicate key '" + path.back() + "'");
                (*target)[path.back()] = value();
            }
            end_of_line();
        }
        return root;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("TOML line " + std::to_string(line_) + ": " + msg);
    }
    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[pos_]; }
    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }
    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++pos_;
    }
    void skip_blank_lines() {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() == '\r') ++pos_;
            if (peek() == '\n') {
                ++pos_;
                ++line_;
            } else {
                break;
            }
        }
    }
    // Whitespace, comments and newlines inside arrays.
    void skip_all() {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() == '\r' || peek() == '\n') {
                if (peek() == '\n') ++line_;
                ++pos_;
            } else {
                break;
            }
        }
    }
    void end_of_line() {
        skip_ws();
        skip_comment();
        if (peek() == '\r') ++pos_;
        if (eof()) return;
        if (peek() != '\n') fail("unexpected text after value");
        ++pos_;
        ++line_;
    }

    static bool bare_char(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    }

    std::string key() {
        if (peek() == '"') return basic_string();
        if (peek() == '\'') return literal_string();
        const std::size_t start = pos_;
        while (!eof() && bare_char(peek())) ++pos_;
        if (pos_ == start) fail("expected a key");
        return std::string(s_.substr(start, pos_ - start));
    }

    std::vector<std::string> key_path() {
        std::vector<std::string> path{key()};
        while (true) {
            skip_ws();
            if (peek() != '.') break;
            ++pos_;
            skip_ws();
            path.push_back(key());
        }
        return path;
    }

    std::string basic_string() {
        expect('"');
        if (s_.substr(pos_, 2) == "\"\"") fail("multi-line strings are not supported");
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = s_[pos_++];
            if (c == '"') break;
            if (c != '\\') {
                out += c;
                continue;
            }
            const char e = s_[pos_++];
            switch (e) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case 'b': out += '\b'; break;
                case 'f': out += '\f'; break;
                case 'u': case 'U': {
                    const std::size_t n = e == 'u' ? 4 : 8;
                    if (pos_ + n > s_.size()) fail("truncated unicode escape");
                    unsigned cp = 0;
                    const auto r = std::from_chars(s_.data() + pos_, s_.data() + pos_ + n, cp, 16);
                    if (r.ec != std::errc{} || r.ptr != s_.data() + pos_ + n) fail("bad unicode escape");
                    pos_ += n;
                    append_utf8(out, cp);
                    break;
                }
                default: fail(std::string("unknown escape \\") + e);
            }
        }
        return out;
    }

    static void append_utf8(std::string& out, unsigned cp) {
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

    std::string literal_string() {
        expect('\'');
        const std::size_t start = pos_;
        while (!eof() && peek() != '\'' && peek() != '\n') ++pos_;
        if (peek() != '\'') fail("unterminated literal string");
        std::string out(s_.substr(start, pos_ - start));
        ++pos_;
        return out;
    }

    json value() {
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') return array();
        if (c == '{') return inline_table();
        if (s_.substr(pos_, 4) == "true" && !bare_char(pos_ + 4 < s_.size() ? s_[pos_ + 4] : ' ')) {
            pos_ += 4;
            return true;
        }
        if (s_.substr(pos_, 5) == "false" && !bare_char(pos_ + 5 < s_.size() ? s_[pos_ + 5] : ' ')) {
            pos_ += 5;
            return false;
        }
        return number();
    }

    json number() {
        const std::size_t start = pos_;
        while (!eof() && (bare_char(peek()) || peek() == '+' || peek() == '.')) ++pos_;
        std::string tok;
        for (char ch : s_.substr(start, pos_ - start))
            if (ch != '_') tok += ch;
        if (tok.empty()) fail("expected a value");
        if (tok == "inf" || tok == "+inf" || tok == "-inf" || tok == "nan" || tok == "+nan" || tok == "-nan")
            fail("non-finite numbers are not allowed");
        const bool is_float = tok.find_first_of(".eE") != std::string::npos;
        const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
        const char* e = tok.data() + tok.size();
        if (is_float) {
            double v = 0;
            const auto r = std::from_chars(b, e, v);
            if (r.ec != std::errc{} || r.ptr != e) fail("invalid number '" + tok + "'");
            return v;
        }
        std::int64_t v = 0;
        const auto r = std::from_chars(b, e, v);
        if (r.ec != std::errc{} || r.ptr != e) fail("invalid value '" + tok + "'");
        return v;
    }

    json array() {
        expect('[');
        json arr = json::array();
        skip_all();
        while (peek() != ']') {
            arr.push_back(value());
            skip_all();
            if (peek() == ',') {
                ++pos_;
                skip_all();
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
        ++pos_;
        return arr;
    }

    json inline_table() {
        expect('{');
        json obj = json::object();
        skip_ws();
        if (peek() == '}') {
            ++pos_;
            return obj;
        }
        while (true) {
            skip_ws();
            const auto path = key_path();
            skip_ws();
            expect('=');
            skip_ws();
            json* target = &obj;
            for (std::size_t i = 0; i + 1 < path.size(); ++i) {
                json& next = (*target)[path[i]];
                if (next.is_null()) next = json::object();
                target = &next;
            }
            if (target->contains(path.back())) fail("duplicate key '" + path.back() + "'");
            (*target)[path.back()] = value();
            skip_ws();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            expect('}');
            return obj;
        }
    }
};

}  // namespace

json parse_toml_lite(std::string_view text) { return Parser(text).run(); }

}  // namespace propdet
