//! The discretized mixture-of-logistics output distribution: bin
//! probabilities, their total, and a histogram of samples.
//!
//!     cargo run --example mixture_of_logistics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scwr::vocoder::{bin_width, mol_log_prob, sample_mol, MixtureParams};

fn main() -> scwr::Result<()> {
    let bits = 8;
    let mp = MixtureParams::new(vec![0.0, 1.0, -0.5], vec![-0.6, 0.1, 0.97], vec![-3.0, -2.5, -4.0])?;
    let d = bin_width(bits);
    let probs: Vec<f64> = (0..1usize << bits)
        .map(|i| mol_log_prob(&mp, -1.0 + i as f64 * d, bits).map(f64::exp))
        .collect::<scwr::Result<_>>()?;
    println!("weights {:?}", mp.weights());
    println!("sum over {} bins = {:.15}", probs.len(), probs.iter().sum::<f64>());
    println!("edge bins: P(-1) = {:.3e}  P(+1) = {:.3e}", probs[0], probs[probs.len() - 1]);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut hist = [0usize; 20];
    for _ in 0..20_000 {
        let x = sample_mol(&mp, &mut rng);
        hist[(((x + 1.0) / 2.0 * 20.0) as usize).min(19)] += 1;
    }
    for (i, count) in hist.iter().enumerate() {
        let lo = -1.0 + i as f64 * 0.1;
        println!("[{lo:+.1}, {:+.1})  {}", lo + 0.1, "#".repeat(count / 100));
    }
    Ok(())
}
