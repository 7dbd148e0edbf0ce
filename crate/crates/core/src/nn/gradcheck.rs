use super::tape::{Mode, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower bound of the relative-error denominator, so gradients that are
/// zero up to rounding compare in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-3;

const DROPOUT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADCHECK_FLOOR)
}

fn evaluate<F>(f: &F, mode: Mode, inputs: &[Tensor<f64>]) -> Result<(Tape<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new(mode, DROPOUT_SEED);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.detached().with_grad())).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).numel() != 1 {
        return Err(Error::shape("gradcheck function must return a scalar"));
    }
    Ok((tape, vars, out))
}

/// Compare the tape gradient of the scalar `f(inputs)` with central
/// differences of step `h`. Every evaluation uses a fresh tape with the same
/// dropout seed, so masks repeat.
pub fn finite_diff_gradcheck<F>(mode: Mode, inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let (tape, vars, out) = evaluate(&f, mode, inputs)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut col = Vec::with_capacity(inputs[k].numel());
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data[i];
            probe[k].data[i] = orig + h;
            let (t, _, o) = evaluate(&f, mode, &probe)?;
            let plus = t.value(o).item();
            probe[k].data[i] = orig - h;
            let (t, _, o) = evaluate(&f, mode, &probe)?;
            let minus = t.value(o).item();
            probe[k].data[i] = orig;
            let d = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[k][i], d));
            col.push(d);
        }
        numeric.push(col);
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        analytic,
        numeric,
    })
}
