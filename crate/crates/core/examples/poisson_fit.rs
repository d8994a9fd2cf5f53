//! Fits the rate of a Poisson simulator with AVO and prints the trajectory.
//!
//! cargo run --release -p avo-core --example poisson_fit -- [seed] [gamma]

use avo_core::rng::seeded;
use avo_core::simulators::{simulate_n, Poisson};
use avo_core::{run_avo, AvoConfig, ProposalParams};

fn main() -> avo_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let gamma: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let target = 7f64.ln();
    let observed = simulate_n(&Poisson, &[target], 100_000, &mut seeded(seed ^ 0xDA7A))?;
    let config = AvoConfig {
        iterations: 3000,
        entropy_coefficient: gamma,
        initial_proposal: Some(ProposalParams::isotropic(vec![0.0], 0.5)?),
        seed,
        ..AvoConfig::default()
    };
    let run = run_avo(&config, &Poisson, &observed, Some(&[target]))?;
    for rec in run.record.iterations.iter().step_by(250) {
        println!(
            "iter {:5}  sims {:7}  mean {:.4}  sigma {:.4}  -log q {:.3}  bce {:.4}",
            rec.iteration,
            rec.simulations,
            rec.mean[0],
            rec.log_scale[0].exp(),
            rec.neg_log_q_target.unwrap_or(f64::NAN),
            rec.discriminator_loss
        );
    }
    println!(
        "final: mean {:.4} sigma {:.4} status {:?}",
        run.proposal.mean[0],
        run.proposal.scale()[0],
        run.record.status
    );
    Ok(())
}
