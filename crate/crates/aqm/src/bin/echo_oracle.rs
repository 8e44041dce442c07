//! Test double for the answerer protocol: answers every question with the
//! true count of the announced target image.

use std::io::{self, BufWriter};

fn main() {
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    if let Err(e) = aqm::protocol::serve_true_counts(stdin, stdout) {
        eprintln!("echo-oracle: {e}");
        std::process::exit(1);
    }
}
