use crate::error::{Error, Result};
use crate::numerics::{Rng, Vector};

/// `x + √variance · ε` with `ε` i.i.d. standard normal from `rng`.
///
/// One normal draw is consumed per coordinate even when `variance == 0`,
/// so the stream position does not depend on the noise level.
pub fn add_gaussian_noise(x: &[f64], variance: f64, rng: &mut Rng) -> Result<Vector> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise variance must be nonnegative, got {variance}"
        )));
    }
    let std = variance.sqrt();
    Ok(x.iter()
        .map(|v| {
            let e = rng.gaussian();
            if std == 0.0 {
                *v
            } else {
                v + std * e
            }
        })
        .collect::<Vec<_>>()
        .into())
}
