#include <cctype>
#include <string>

#include "elmes/config.hpp"

namespace elmes {
namespace {

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Tries to read `{ident(.ident)*[()]}` starting at text[pos] == '{'.
// Returns the length of the whole placeholder including braces, or 0.
std::size_t match_placeholder(std::string_view text, std::size_t pos) {
  std::size_t i = pos + 1;
  for (;;) {
    if (i >= text.size() || !ident_start(text[i])) return 0;
    while (i < text.size() && ident_char(text[i])) ++i;
    if (i < text.size() && text[i] == '.') {
      ++i;
      continue;
    }
    break;
  }
  if (text.substr(i, 2) == "()") i += 2;
  if (i >= text.size() || text[i] != '}') return 0;
  return i + 1 - pos;
}

template <typename OnLiteral, typename OnPlaceholder>
void scan(std::string_view text, OnLiteral&& on_literal,
          OnPlaceholder&& on_placeholder) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      on_literal('{');
      i += 2;
    } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      on_literal('}');
      i += 2;
    } else if (c == '{') {
      if (const auto len = match_placeholder(text, i); len > 0) {
        on_placeholder(text.substr(i + 1, len - 2), i);
        i += len;
      } else {
        on_literal(c);
        ++i;
      }
    } else {
      on_literal(c);
      ++i;
    }
  }
}

}  // namespace

std::vector<Placeholder> find_placeholders(std::string_view text) {
  std::vector<Placeholder> out;
  scan(
      text, [](char) {},
      [&](std::string_view name, std::size_t offset) {
        out.push_back({std::string(name), offset});
      });
  return out;
}

RenderContext RenderContext::for_bindings(const Bindings& bindings) {
  RenderContext ctx;
  for (const auto& [name, value] : bindings) {
    ctx.values_[name] = value;
    ctx.values_["task." + name] = value;
  }
  return ctx;
}

RenderContext& RenderContext::set(std::string key, std::string value) {
  values_[std::move(key)] = std::move(value);
  return *this;
}

RenderContext& RenderContext::with_dialog(std::string dialog) {
  return set(std::string(kDialogPlaceholder), std::move(dialog));
}

const std::string* RenderContext::lookup(std::string_view key) const noexcept {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string render_text(std::string_view text, const RenderContext& context) {
  std::string out;
  out.reserve(text.size());
  scan(
      text, [&](char c) { out.push_back(c); },
      [&](std::string_view name, std::size_t offset) {
        const std::string* value = context.lookup(name);
        if (value == nullptr) {
          throw TemplateError(std::string(name), offset,
                              "unbound placeholder {" + std::string(name) +
                                  "} at offset " + std::to_string(offset));
        }
        out += *value;
      });
  return out;
}

Message render_template(const PromptTemplate& tmpl,
                        const RenderContext& context) {
  return Message{tmpl.role, render_text(tmpl.content, context)};
}

}  // namespace elmes
