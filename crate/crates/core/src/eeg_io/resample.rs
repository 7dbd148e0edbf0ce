use super::MontageSignal;
use crate::error::{Error, Result};

/// Linearly interpolate every channel onto a `target_rate` grid.
///
/// The output holds `round(duration * target_rate)` samples; sample times past
/// the last input sample hold its value. No anti-alias filtering is applied.
pub fn resample_signal(sig: &MontageSignal, target_rate: f64) -> Result<MontageSignal> {
    if !(target_rate > 0.0) || !target_rate.is_finite() {
        return Err(Error::invalid(format!("target rate must be > 0, got {target_rate}")));
    }
    if target_rate == sig.rate {
        return Ok(sig.clone());
    }
    let n_in = sig.len();
    let n_out = (sig.duration() * target_rate).round() as usize;
    let ratio = sig.rate / target_rate;
    let channels = sig
        .channels
        .iter()
        .map(|ch| {
            (0..n_out)
                .map(|k| {
                    let pos = k as f64 * ratio;
                    let i = pos.floor() as usize;
                    if i + 1 >= n_in {
                        return ch[n_in - 1];
                    }
                    let frac = pos - i as f64;
                    ch[i] + frac * (ch[i + 1] - ch[i])
                })
                .collect()
        })
        .collect();
    MontageSignal::new(channels, target_rate)
}
