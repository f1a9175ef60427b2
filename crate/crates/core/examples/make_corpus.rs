//! Writes a synthetic corpus (WAV files plus `manifest.csv`) for trying the
//! command line.
//!
//!     cargo run --example make_corpus -- DIR [noise|harmonic] [speakers] [clips] [seconds] [seed]

use scwr::corpus::{harmonic_corpus, noise_corpus, write_corpus};

fn main() -> scwr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first() else {
        eprintln!("usage: make_corpus DIR [noise|harmonic] [speakers] [clips] [seconds] [seed]");
        std::process::exit(1);
    };
    let kind = args.get(1).map_or("noise", String::as_str);
    let num = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (speakers, clips, seconds, seed) = (num(2, 4.0) as usize, num(3, 10.0) as usize, num(4, 3.0), num(5, 1.0) as u64);
    let items = match kind {
        "harmonic" => harmonic_corpus(speakers, clips, seconds, seed),
        _ => noise_corpus(speakers, clips, seconds, seed),
    };
    let manifest = write_corpus(&items, dir)?;
    println!("{} utterances -> {dir}/manifest.csv", manifest.rows.len());
    Ok(())
}
