//! Learn a dictionary on spatio-angular blocks of a noisy phantom and code
//! a few blocks under a residual bound.
//!
//!     cargo run --release --example sparse_coding -- [epochs]

use nlsam::angular::find_neighbors;
use nlsam::blocks::{assemble_block_matrix, BlockConfig};
use nlsam::phantom::{crossing_phantom, phantom_gradient_table};
use nlsam::sim::{add_noise, NoiseSpec};
use nlsam::sparse::{encode_bounded, train_dictionary, PenaltyRule, TrainOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30);

    let table = phantom_gradient_table(1, 12, 1000.0)?;
    let (clean, mask) = crossing_phantom([16, 16, 16], &table)?;
    let (noisy, field) = add_noise(&clean, &table, Some(&mask), &NoiseSpec::rician(10.0, 5))?;
    let sigma = field.sigma()[0];

    let cfg = BlockConfig::default();
    let subset = find_neighbors(&table, 1, cfg.angular_neighbors)?;
    let blocks = assemble_block_matrix(&noisy, &subset, &cfg, &mask)?;
    let trained = train_dictionary(&blocks, &TrainOptions { epochs, seed: 1, ..Default::default() })?;
    println!("{} blocks of length {}, {} atoms", blocks.n_cols(), blocks.rows(), trained.dictionary.p());
    println!("objective: first {:.4}, last {:.4}", trained.objective[0], trained.objective[epochs - 1]);

    let bound = PenaltyRule::default().coder_bound(sigma * sigma, blocks.rows());
    for j in (0..blocks.n_cols()).step_by(blocks.n_cols() / 5) {
        let code = encode_bounded(blocks.column(j), &trained.dictionary, bound, sigma, j as u64)?;
        println!(
            "block {j:5}: {} atoms, residual {:.1} / bound {:.1}, met {}",
            code.support.len(),
            code.residual_sq,
            bound,
            code.bound_met
        );
    }
    Ok(())
}
