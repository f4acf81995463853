// SPDX-License-Identifier: MIT OR Apache-2.0

fn main() {
    std::process::exit(covratio_cli::run(std::env::args().collect()));
}
