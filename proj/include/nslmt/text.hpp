#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nslmt {

std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");
std::string_view trim(std::string_view text);

/// Decodes UTF-8 into code points. Invalid bytes decode as U+FFFD.
std::u32string utf8_decode(std::string_view text);

bool ends_with(std::string_view text, std::string_view suffix);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Reads every line of a text file (trailing '\r' removed).
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace nslmt
