//! Distances, geodesics and the geometric mean on the SPD manifold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riemann_bci::spd::{geodesic, geometric_mean, karcher_residual, random_invertible, random_spd, riemann_distance};
use riemann_bci::spd::{MeanConfig, SpdMatrix};

fn main() -> riemann_bci::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let a = random_spd(&mut rng, 4, 100.0);
    let b = random_spd(&mut rng, 4, 100.0);

    let d = riemann_distance(&a, &b)?;
    println!("d(A, B)            = {d:.6}");
    println!("d(A^-1, B^-1)      = {:.6}", riemann_distance(&a.inverse(), &b.inverse())?);
    let w = random_invertible(&mut rng, 4, 50.0);
    println!("d(W'AW, W'BW)      = {:.6}", riemann_distance(&a.congruence(&w)?, &b.congruence(&w)?)?);

    let mid = geodesic(&a, &b, 0.5)?;
    println!("d(A, mid), d(mid, B) = {:.6}, {:.6}", riemann_distance(&a, &mid)?, riemann_distance(&mid, &b)?);

    let set: Vec<SpdMatrix> = (0..20).map(|_| random_spd(&mut rng, 4, 100.0)).collect();
    let cfg = MeanConfig::default();
    let mean = geometric_mean(&set, None, &cfg)?;
    println!(
        "geometric mean of 20 matrices: residual {:.2e} (tol {:.1e})",
        karcher_residual(&mean, &set, None)?,
        cfg.tolerance(4)
    );
    Ok(())
}
