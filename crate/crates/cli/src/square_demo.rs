use std::io::Write;

use anyhow::{bail, Context};
use groundseg::square::{read_tensors, write_tensors, FeatureStack, Matrix, SquareDims, SquareEncoder, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{output, SquareDemoArgs, EXIT_OK};

fn read_file_tensors(path: &std::path::Path) -> anyhow::Result<Vec<Tensor>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_tensors(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn cmd_square_demo(a: &SquareDemoArgs) -> anyhow::Result<i32> {
    let encoder = match &a.params {
        Some(p) => SquareEncoder::from_tensors(&read_file_tensors(p)?, a.heads)?,
        None => SquareEncoder::random(
            SquareDims {
                feature_dim: a.feature_dim,
                num_queries: a.queries,
                query_dim: a.query_dim,
                instruction_len: a.instruction_len,
                llm_dim: a.llm_dim,
                heads: a.heads,
            },
            a.seed,
        )?,
    };
    let features = match &a.features {
        Some(p) => {
            let ts = read_file_tensors(p)?;
            let [t] = &ts[..] else {
                bail!("{}: expected one feature tensor, found {}", p.display(), ts.len());
            };
            FeatureStack::new(t.to_matrices()?)?
        }
        None => {
            if a.images == 0 || a.feature_len == 0 {
                bail!("--images and --feature-len must be positive");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0xfea7);
            let d_v = encoder.relational.feature_dim();
            FeatureStack::new(
                (0..a.images)
                    .map(|_| Matrix::from_fn(a.feature_len, d_v, |_, _| rng.random_range(-1.0..1.0)))
                    .collect(),
            )?
        }
    };
    let out = encoder.forward(&features)?;
    let tensors = [Tensor::from_matrix(&out.relational), Tensor::from_matrices(&out.per_image)];
    let mut w = output(Some(&a.out))?;
    write_tensors(&mut w, &tensors)?;
    w.flush()?;
    if let Some(p) = &a.save_params {
        let mut w = output(Some(p))?;
        write_tensors(&mut w, &encoder.to_tensors())?;
        w.flush()?;
    }
    let (rows, cols) = out.per_image[0].shape();
    println!(
        "images {} -> relational {}x{}, per-image output {}x{}x{}",
        features.num_images(),
        out.relational.nrows(),
        out.relational.ncols(),
        out.per_image.len(),
        rows,
        cols
    );
    Ok(EXIT_OK)
}
