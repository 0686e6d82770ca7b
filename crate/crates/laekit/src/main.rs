// SPDX-License-Identifier: MIT OR Apache-2.0

fn main() {
    laekit::init_logging();
    std::process::exit(laekit::run_cli(std::env::args_os()));
}
