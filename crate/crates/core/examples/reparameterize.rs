//! Collapse a five-branch training layer into one 5x5 convolution and check
//! that both forms agree.
//!
//!     cargo run --example reparameterize

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwe::mrdconv::{forward_infer, forward_train, reparameterize, BranchKind, MrdConvTrainWeights, RandomInit};
use uwe::Tensor;

fn main() -> uwe::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (cin, cout, rep_scale) = (3, 8, 4);
    let train = MrdConvTrainWeights::random(&mut rng, cin, cout, rep_scale, &RandomInit::wide())?;

    println!("training form: {} parameters", train.param_count());
    for kind in BranchKind::ALL {
        let (kh, kw) = kind.kernel();
        println!(
            "  {:<2} {kh}x{kw} dilation {:?} padding {:?}",
            kind.name(),
            kind.dilation(),
            kind.padding()
        );
    }

    let infer = reparameterize(&train)?;
    println!("inference form: {} parameters (one 5x5 conv)", infer.param_count());

    let x = Tensor::from_fn([1, cin, 32, 32], |_, _, _, _| rng.gen_range(0.0..1.0))?;
    let a = forward_train(&x, &train)?;
    let b = forward_infer(&x, &infer)?;
    let err = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
    println!("max |train - inference| on a 32x32 input: {err:.2e}");
    Ok(())
}
