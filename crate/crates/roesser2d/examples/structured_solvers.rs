//! Plant-and-recover runs of the block-Toeplitz and block-Hankel solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roesser2d::linalg::{hankel_from_generators, hss, lttss, rel_diff, Mat};

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn main() -> roesser2d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (br, bc, i, j) = (2, 3, 4, 10);

    let mut t = Mat::zeros(br * i, bc * i);
    let diag: Vec<Mat> = (0..i).map(|_| random(&mut rng, br, bc)).collect();
    for a in 0..i {
        for b in 0..=a {
            t.view_mut((a * br, b * bc), (br, bc)).copy_from(&diag[a - b]);
        }
    }
    let a = random(&mut rng, 12, br * i);
    let b = random(&mut rng, bc * i, 15);
    let x = lttss(&a, &b, &(&a * &t * &b), br, bc, i)?;
    println!("lttss relative error {:.2e}", rel_diff(&x, &t));

    let gens: Vec<Mat> = (0..i + j - 1).map(|_| random(&mut rng, br, bc)).collect();
    let h = hankel_from_generators(&gens, i, j);
    let a = random(&mut rng, 10, br * i);
    let b = random(&mut rng, bc * j, 36);
    let x = hss(&a, &b, &(&a * &h * &b), br, bc, i, j)?;
    println!("hss relative error {:.2e}", rel_diff(&x, &h));
    Ok(())
}
