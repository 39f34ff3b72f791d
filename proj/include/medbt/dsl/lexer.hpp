#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace medbt::dsl {

/// Location of a diagnostic: 1-based line and column, length in bytes.
struct SourceSpan {
  std::size_t line = 1;
  std::size_t column = 1;
  std::size_t length = 0;

  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

enum class Severity { Error, Warning };

struct ParseDiagnostic {
  Severity severity = Severity::Error;
  std::string message;
  SourceSpan span;

  std::string format() const
  {
    return std::to_string(span.line) + ":" + std::to_string(span.column) + ": " +
           (severity == Severity::Error ? "error: " : "warning: ") + message;
  }
};

enum class TokenType { Word, String, Id, Op };

struct Token {
  TokenType type = TokenType::Word;
  /// Word/op text, unescaped string contents, or id without the '#'.
  std::string text;
  std::size_t column = 1;
  std::size_t length = 0;
};

namespace detail {

inline bool is_op_char(char c) { return c == '<' || c == '>' || c == '=' || c == '!'; }

inline bool is_id_char(char c)
{
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

}  // namespace detail

/// Splits one source line (indentation already skipped from `start`) into
/// tokens. Lexical errors are appended to `diags`; the offending text is
/// skipped.
inline std::vector<Token> tokenize_line(std::string_view line, std::size_t start, std::size_t line_no,
                                        std::vector<ParseDiagnostic>& diags)
{
  std::vector<Token> out;
  std::size_t i = start;
  auto error = [&](std::string msg, std::size_t col, std::size_t len) {
    diags.push_back({Severity::Error, std::move(msg), {line_no, col + 1, len}});
  };
  while (i < line.size()) {
    const char c = line[i];
    if (c == ' ' || c == '\t') {
      ++i;
      continue;
    }
    const std::size_t begin = i;
    if (c == '"') {
      std::string text;
      ++i;
      bool closed = false;
      while (i < line.size()) {
        const char d = line[i];
        if (d == '"') {
          closed = true;
          ++i;
          break;
        }
        if (d == '\\' && i + 1 < line.size()) {
          const char e = line[i + 1];
          switch (e) {
            case 'n': text += '\n'; break;
            case 't': text += '\t'; break;
            case '"': text += '"'; break;
            case '\\': text += '\\'; break;
            default:
              error(std::string("unknown escape '\\") + e + "'", i, 2);
              text += e;
          }
          i += 2;
          continue;
        }
        text += d;
        ++i;
      }
      if (!closed) {
        error("unterminated string", begin, line.size() - begin);
        break;
      }
      out.push_back({TokenType::String, std::move(text), begin + 1, i - begin});
    } else if (c == '#') {
      ++i;
      while (i < line.size() && detail::is_id_char(line[i])) ++i;
      if (i == begin + 1) {
        error("expected an identifier after '#'", begin, 1);
        continue;
      }
      out.push_back({TokenType::Id, std::string(line.substr(begin + 1, i - begin - 1)), begin + 1, i - begin});
    } else if (detail::is_op_char(c)) {
      std::size_t len = (i + 1 < line.size() && line[i + 1] == '=') ? 2 : 1;
      std::string op(line.substr(i, len));
      i += len;
      if (op == "!") {
        error("unexpected '!'", begin, 1);
        continue;
      }
      out.push_back({TokenType::Op, std::move(op), begin + 1, len});
    } else {
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '"' && !detail::is_op_char(line[i])) ++i;
      out.push_back({TokenType::Word, std::string(line.substr(begin, i - begin)), begin + 1, i - begin});
    }
  }
  return out;
}

}  // namespace medbt::dsl
