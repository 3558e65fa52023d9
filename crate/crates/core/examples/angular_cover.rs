//! Build angular neighborhoods on one shell and show how many subsets the
//! greedy cover keeps.
//!
//!     cargo run --release --example angular_cover -- [directions] [neighbors]

use nlsam::angular::{all_subsets, greedy_set_cover, hemisphere_directions};
use nlsam::volume::GradientTable;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let an: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(4);

    let mut bvecs = vec![[0.0; 3]];
    bvecs.extend(hemisphere_directions(n));
    let mut bvals = vec![0.0];
    bvals.extend(std::iter::repeat_n(1000.0, n));
    let table = GradientTable::new(bvals, bvecs, 50.0)?;

    let subsets = all_subsets(&table, an)?;
    let chosen = greedy_set_cover(&subsets);
    println!("{n} directions, {an} neighbors: {} subsets, cover keeps {}", subsets.len(), chosen.len());
    for &i in chosen.iter().take(5) {
        println!("  target {:3}: members {:?}", subsets[i].target(), subsets[i].members());
    }
    Ok(())
}
