// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>

#include <CLI11.hpp>

int main(int argc, char **argv)
{
  CLI::App app{"doxbench: encrypted-DNS benchmarking suite"};
  app.require_subcommand(1);
  app.add_subcommand("serve", "run the mock resolver");
  app.add_subcommand("measure", "run a measurement campaign");
  app.add_subcommand("simulate", "run the page-load simulator");
  app.add_subcommand("analyze", "summarize measurement output");
  app.add_subcommand("discover", "probe for encrypted-DNS support");
  CLI11_PARSE(app, argc, argv);
  std::fprintf(stderr, "not implemented yet\n");
  return 2;
}
