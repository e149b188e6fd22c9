//! Writes a synthetic labeled corpus as JSONL.
//!
//! cargo run --example make_corpus -- OUT.jsonl [PER_CLASS] [SEED]

use bugtriage::corpus::write_jsonl;
use bugtriage::synthetic::{generate_raw_corpus, MixtureConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().expect("usage: make_corpus OUT.jsonl [PER_CLASS] [SEED]");
    let per_class = args.next().map_or(200, |s| s.parse().expect("PER_CLASS"));
    let seed = args.next().map_or(0, |s| s.parse().expect("SEED"));
    let cfg = MixtureConfig { seed, ..MixtureConfig::default() };
    let corpus = generate_raw_corpus(&cfg, per_class);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&out).expect("create output"));
    write_jsonl(&corpus, &mut f).expect("write corpus");
}
