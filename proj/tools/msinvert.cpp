// msinvert — fracture-network inversion driver.
//
//   msinvert run <config>
//   msinvert validate <config>
//   msinvert sweep <config> --vary key=v1,v2,...
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime error. The environment
// variable MSINVERT_OUT overrides the configured output directory.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "msinv/config.hpp"
#include "msinv/errors.hpp"
#include "msinv/experiment.hpp"

namespace {

int usage(std::ostream& out, int code) {
  out << "usage:\n"
         "  msinvert run <config>\n"
         "  msinvert validate <config>\n"
         "  msinvert sweep <config> --vary key=v1,v2,...\n";
  return code;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t comma = s.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

int dispatch(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) return usage(std::cerr, 1);
  const std::string& cmd = args[0];
  if (cmd == "help" || cmd == "--help" || cmd == "-h")
    return usage(std::cout, 0);
  if (args.size() < 2) return usage(std::cerr, 1);

  msinv::ExperimentConfig config = msinv::read_config(args[1]);
  if (const char* env = std::getenv("MSINVERT_OUT"); env && *env)
    config.output_dir = env;

  if (cmd == "run") {
    if (args.size() != 2) return usage(std::cerr, 1);
    msinv::run_case(config, std::cout);
    return 0;
  }
  if (cmd == "validate") {
    if (args.size() != 2) return usage(std::cerr, 1);
    msinv::validate_config(config, std::cout);
    return 0;
  }
  if (cmd == "sweep") {
    if (args.size() != 4 || args[2] != "--vary") return usage(std::cerr, 1);
    const size_t eq = args[3].find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "sweep: --vary expects key=v1,v2,...\n";
      return 1;
    }
    msinv::sweep(config, args[3].substr(0, eq),
                 split_csv(args[3].substr(eq + 1)), std::cout);
    return 0;
  }
  return usage(std::cerr, 1);
}

} // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const msinv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const msinv::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const msinv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
