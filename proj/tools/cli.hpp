#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace herglotz::cli {

// Exit codes: 0 ok, 1 usage/IO, 2 physics failure, 3 check failure.
int cmd_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_check(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_compare(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_list(std::ostream& out);

int main_impl(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace herglotz::cli
