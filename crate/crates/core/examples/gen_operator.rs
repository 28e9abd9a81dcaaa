//! Build the three operator families and round-trip one through a file.
//!
//! cargo run --example gen_operator

use cosparse_weights::io;
use cosparse_weights::math::Rng;
use cosparse_weights::operators::{difference_operator, gen_random_frame, identity_operator};

fn main() -> cosparse_weights::Result<()> {
    let mut rng = Rng::new(7);
    let frame = gen_random_frame(12, 8, 0.5, 1.5, &mut rng)?;
    let ident = identity_operator(8)?;
    let diff = difference_operator(8)?;

    for (name, op) in [("random frame", &frame), ("identity", &ident), ("difference", &diff)] {
        let norms = op.row_norms();
        println!(
            "{name:>12}: {} x {}, row norms in [{:.3}, {:.3}]",
            op.p(),
            op.n(),
            norms.min(),
            norms.max()
        );
    }

    let path = std::env::temp_dir().join("cosparse-frame.txt");
    io::write_operator(&path, &frame)?;
    let back = io::read_operator(&path)?;
    println!("round trip through {}: exact = {}", path.display(), back.matrix() == frame.matrix());
    Ok(())
}
