// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/cli.hpp"

int main(int argc, char** argv) { return ftsmoe::run_cli(argc, argv); }
