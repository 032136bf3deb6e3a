use nalgebra::{DMatrix, DVector};

use crate::basis::Primary;
use crate::error::{Error, Result};
use crate::forward::{GainTriple, ObservationSet};

/// Relative singular-value floor below which the primary images count as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Fits `image` as a linear combination of the three primary images in the
/// Frobenius norm; negative gains are clamped to zero.
pub fn estimate_gains(
    image: &DMatrix<f64>,
    red: &DMatrix<f64>,
    green: &DMatrix<f64>,
    blue: &DMatrix<f64>,
) -> Result<GainTriple> {
    let shape = image.shape();
    if [red, green, blue].iter().any(|m| m.shape() != shape) {
        return Err(Error::Dimension("gain estimation needs equally shaped images".into()));
    }
    let len = shape.0 * shape.1;
    let mut stack = DMatrix::zeros(len, 3);
    for (j, m) in [red, green, blue].iter().enumerate() {
        stack.set_column(j, &DVector::from_column_slice(m.as_slice()));
    }
    let target = DVector::from_column_slice(image.as_slice());

    let svd = stack.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= RANK_TOL * smax {
        return Err(Error::DegeneratePrimaries);
    }
    let sol = svd.solve(&target, 0.0).map_err(|_| Error::DegeneratePrimaries)?;
    GainTriple::new(sol[0].max(0.0), sol[1].max(0.0), sol[2].max(0.0))
}

/// Pre-estimates the gains of every illumination from the unit-primary captures
/// found among the nominal gains. Returns `None` if a primary capture is missing.
pub fn estimate_observation_gains(obs: &ObservationSet) -> Result<Option<Vec<GainTriple>>> {
    let find = |p: Primary| obs.gains().iter().position(|g| g.unit_primary() == Some(p));
    let (Some(r), Some(g), Some(b)) = (find(Primary::Red), find(Primary::Green), find(Primary::Blue)) else {
        return Ok(None);
    };
    let (ir, ig, ib) = (obs.image(r), obs.image(g), obs.image(b));
    (0..obs.n_illuminations())
        .map(|n| estimate_gains(&obs.image(n), &ir, &ig, &ib))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}
