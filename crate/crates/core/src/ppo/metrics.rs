use std::io::{BufRead, Write};

use super::{RolloutBuffer, UpdateStats};
use crate::error::{Error, Result};
use crate::sim::Outcome;

pub const CURVE_HEADER: &str =
    "update,env_steps,episodes,mean_return,success_rate,collision_rate,oob_rate,timeout_rate,policy_loss,value_loss,entropy,grad_norm";

/// One training-curve row. Rates are percentages over the episodes that
/// ended inside the rollout window; `mean_return` is `None` if none did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateMetrics {
    pub update: u64,
    /// Cumulative environment steps after this update's rollout.
    pub env_steps: u64,
    pub episodes: usize,
    pub mean_return: Option<f64>,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub oob_rate: f64,
    pub timeout_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

impl UpdateMetrics {
    pub fn from_rollout(update: u64, env_steps: u64, buffer: &RolloutBuffer, stats: &UpdateStats) -> Self {
        let n = buffer.episodes.len();
        let rate = |o: Outcome| {
            if n == 0 {
                0.0
            } else {
                100.0 * buffer.episodes.iter().filter(|e| e.outcome == Some(o)).count() as f64 / n as f64
            }
        };
        Self {
            update,
            env_steps,
            episodes: n,
            mean_return: (n > 0).then(|| buffer.episodes.iter().map(|e| e.ret).sum::<f64>() / n as f64),
            success_rate: rate(Outcome::Success),
            collision_rate: rate(Outcome::Collision),
            oob_rate: rate(Outcome::OutOfBounds),
            timeout_rate: rate(Outcome::Timeout),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            grad_norm: stats.grad_norm,
        }
    }
}

/// Writes the header and one row per update.
pub fn emit_training_curve<W: Write>(rows: &[UpdateMetrics], mut sink: W) -> Result<()> {
    writeln!(sink, "{CURVE_HEADER}")?;
    for r in rows {
        write_curve_row(r, &mut sink)?;
    }
    Ok(())
}

/// One row without the header, for streaming a curve while training runs.
pub fn write_curve_row<W: Write>(r: &UpdateMetrics, mut sink: W) -> Result<()> {
    let ret = r.mean_return.map(|v| format!("{v:?}")).unwrap_or_default();
    writeln!(
        sink,
        "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
        r.update,
        r.env_steps,
        r.episodes,
        ret,
        r.success_rate,
        r.collision_rate,
        r.oob_rate,
        r.timeout_rate,
        r.policy_loss,
        r.value_loss,
        r.entropy,
        r.grad_norm
    )?;
    Ok(())
}

pub fn read_training_curve<R: BufRead>(source: R) -> Result<Vec<UpdateMetrics>> {
    let mut rows = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != CURVE_HEADER {
                return Err(Error::parse(1, "unexpected training-curve header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::parse(i + 1, format!("expected 12 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| Error::parse(i + 1, format!("bad number {:?}", f[k])));
        let int = |k: usize| f[k].parse::<u64>().map_err(|_| Error::parse(i + 1, format!("bad integer {:?}", f[k])));
        rows.push(UpdateMetrics {
            update: int(0)?,
            env_steps: int(1)?,
            episodes: int(2)? as usize,
            mean_return: if f[3].is_empty() { None } else { Some(num(3)?) },
            success_rate: num(4)?,
            collision_rate: num(5)?,
            oob_rate: num(6)?,
            timeout_rate: num(7)?,
            policy_loss: num(8)?,
            value_loss: num(9)?,
            entropy: num(10)?,
            grad_norm: num(11)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let row = |u| UpdateMetrics {
            update: u,
            env_steps: 1024 * (u + 1),
            episodes: 3,
            mean_return: if u == 1 { None } else { Some(-12.5) },
            success_rate: 33.333333333333336,
            collision_rate: 0.0,
            oob_rate: 66.66666666666667,
            timeout_rate: 0.0,
            policy_loss: 0.1,
            value_loss: 2.0,
            entropy: 3.1,
            grad_norm: 0.7,
        };
        let rows: Vec<_> = (0..3).map(row).collect();
        let mut out = Vec::new();
        emit_training_curve(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8_lossy(&out).lines().count(), 4);
        assert_eq!(read_training_curve(&out[..]).unwrap(), rows);
    }
}
