use nalgebra::DMatrix;
use ridgeapprox::model::QuadraticFormModel;
use ridgeapprox::ridge::{build_ridge, estimate_h, validate_error, ProjectorFamily};
use ridgeapprox::{GaussianMeasure, SampleStream};

fn main() -> ridgeapprox::Result<()> {
    let d = 8;
    let a = DMatrix::from_fn(d, d, |i, j| if i == j { 3.0 / (1.0 + i as f64) } else { 0.1 });
    let model = QuadraticFormModel::new(a)?;
    let mu = GaussianMeasure::standard(d);
    let root = SampleStream::new(42, 0);

    let h = estimate_h(&model, &mu, &root.substream(1), 500)?;
    let family = ProjectorFamily::new(&h, &mu)?;
    println!("rank        bound  validated mse");
    for r in 0..=d {
        let p = family.projector(r)?;
        let ridge = build_ridge(&model, &mu, &p, &root.substream(2), 20)?;
        let v = validate_error(&ridge, &model, &mu, &root.substream(3), 2000)?;
        println!(
            "{r:>4}  {:>11.4e}  {:.4e} ± {:.1e}",
            family.optimal_bound(r).max(0.0),
            v.mse,
            v.std_error
        );
    }
    Ok(())
}
