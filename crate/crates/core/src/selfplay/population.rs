use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::AgentKind;

/// Fractions of each sparring kind among spawned agents.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub fractions: BTreeMap<AgentKind, f64>,
}

impl PopulationSpec {
    pub fn new(pairs: &[(AgentKind, f64)]) -> Result<Self> {
        let mut fractions = BTreeMap::new();
        for &(k, p) in pairs {
            if !AgentKind::POPULATION.contains(&k) {
                return Err(Error::Config(format!("{k} cannot appear in a population")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("fraction for {k} outside [0, 1]: {p}")));
            }
            if fractions.insert(k, p).is_some() {
                return Err(Error::Config(format!("{k} listed twice")));
            }
        }
        let sum: f64 = fractions.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("population fractions sum to {sum}, not 1")));
        }
        Ok(Self { fractions })
    }

    pub fn fraction(&self, k: AgentKind) -> f64 {
        self.fractions.get(&k).copied().unwrap_or(0.0)
    }

    /// Kinds with a nonzero share.
    pub fn active_kinds(&self) -> impl Iterator<Item = AgentKind> + '_ {
        self.fractions.iter().filter(|(_, &p)| p > 0.0).map(|(&k, _)| k)
    }

    /// Rows of the population table: 1 is all rule-based, 4 mixes all four kinds.
    pub fn table_row(n: usize) -> Result<Self> {
        use AgentKind::*;
        match n {
            1 => Self::new(&[(Idm, 1.0)]),
            2 => Self::new(&[(Idm, 0.5), (Rl, 0.5)]),
            3 => Self::new(&[(Idm, 0.3), (Rl, 0.3), (Sp1, 0.4)]),
            4 => Self::new(&[(Idm, 0.1), (Rl, 0.2), (Sp1, 0.3), (Sp2, 0.4)]),
            _ => Err(Error::Config(format!("no population row {n}"))),
        }
    }
}

impl FromStr for PopulationSpec {
    type Err = Error;

    /// `IDM:0.3,RL:0.3,SP1:0.4`, or `popul1`..`popul4`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("popul") {
            let n: usize = n.parse().map_err(|_| Error::Config(format!("bad population name {s:?}")))?;
            return Self::table_row(n);
        }
        let mut pairs = Vec::new();
        for part in s.split(',') {
            let (k, p) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("expected KIND:fraction, got {part:?}")))?;
            let p: f64 = p.trim().parse().map_err(|_| Error::Config(format!("bad fraction {p:?}")))?;
            pairs.push((k.trim().parse()?, p));
        }
        Self::new(&pairs)
    }
}

impl fmt::Display for PopulationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.fractions.iter().map(|(k, p)| format!("{k}:{p}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Draws a kind for each spawned agent, i.i.d. by the spec's fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct KindSampler {
    kinds: Vec<AgentKind>,
    cumulative: Vec<f64>,
}

impl KindSampler {
    pub fn new(spec: &PopulationSpec) -> Self {
        let mut kinds = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for k in spec.active_kinds() {
            acc += spec.fraction(k);
            kinds.push(k);
            cumulative.push(acc);
        }
        Self { kinds, cumulative }
    }

    pub fn idm_only() -> Self {
        Self { kinds: vec![AgentKind::Idm], cumulative: vec![1.0] }
    }

    pub fn kinds(&self) -> impl Iterator<Item = AgentKind> + '_ {
        self.kinds.iter().copied()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AgentKind {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.kinds.len() - 1);
        self.kinds[i]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn parse_and_validate() {
        let p: PopulationSpec = "IDM:0.3,RL:0.3,SP1:0.4".parse().unwrap();
        assert_eq!(p, PopulationSpec::table_row(3).unwrap());
        assert_eq!("popul4".parse::<PopulationSpec>().unwrap().fraction(AgentKind::Sp2), 0.4);
        assert!("IDM:0.5,RL:0.4".parse::<PopulationSpec>().is_err());
        assert!("IDM:0.5,SP9:0.5".parse::<PopulationSpec>().is_err());
        assert!("EGO:1".parse::<PopulationSpec>().is_err());
    }

    #[test]
    fn sampler_is_seeded_and_skips_zero_shares() {
        let s = KindSampler::new(&PopulationSpec::table_row(1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| s.sample(&mut rng) == AgentKind::Idm));
        let s = KindSampler::new(&PopulationSpec::table_row(4).unwrap());
        let a: Vec<_> = (0..50).map(|_| s.sample(&mut ChaCha8Rng::seed_from_u64(9))).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }
}
