//! Built-in experiment specs on the synthetic logistic instance
//! (50 agents, 5000 samples, 22 features, ridge 1e-3).

use std::str::FromStr;

use super::spec::{DataSource, ExperimentSpec, GraphSpec, InnerRounds, ObjectiveSpec, Scalar};
use crate::metrics::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// IPD against exact ADMM, gradient evaluations to accuracy.
    Fig1a,
    /// IPD with B in {1, 2, 5, 10}.
    Fig1b,
    /// IPD with B = 5 over participation probabilities.
    Fig2a,
    /// IPD against Push-DIGing at two shared stepsizes.
    Fig2b,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1a" => Ok(Preset::Fig1a),
            "fig1b" => Ok(Preset::Fig1b),
            "fig2a" => Ok(Preset::Fig2a),
            "fig2b" => Ok(Preset::Fig2b),
            other => Err(format!("unknown preset `{other}` (fig1a, fig1b, fig2a, fig2b)")),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1a => "fig1a",
            Preset::Fig1b => "fig1b",
            Preset::Fig2a => "fig2a",
            Preset::Fig2b => "fig2b",
        }
    }

    pub fn spec(self) -> ExperimentSpec {
        let base = ExperimentSpec {
            graph: GraphSpec::RingWithChords {
                n: 50,
                chord_probability: 0.2,
                seed: 1,
            },
            objective: ObjectiveSpec::Logistic {
                data: DataSource::Synthetic {
                    samples: 5000,
                    dim: 22,
                    seed: 2,
                },
                ridge: 1e-3,
                partition_seed: 3,
            },
            rho: Scalar::GeometricMean,
            inner_rounds: vec![InnerRounds::Fixed(1)],
            max_rounds: 500,
            stop_tolerance: 1e-3,
            tolerance: 0.1,
            ..ExperimentSpec::default()
        };
        match self {
            Preset::Fig1a => ExperimentSpec {
                methods: vec![Method::Ipd, Method::ExactAdmm],
                eta: vec![Scalar::OverSmoothness(32.0)],
                max_rounds: 300,
                stop_tolerance: 0.05,
                inner_tol: 1e-8,
                ..base
            },
            Preset::Fig1b => ExperimentSpec {
                eta: vec![Scalar::OverSmoothness(16.0)],
                inner_rounds: [1, 2, 5, 10].map(InnerRounds::Fixed).to_vec(),
                ..base
            },
            Preset::Fig2a => ExperimentSpec {
                eta: vec![Scalar::OverSmoothness(16.0)],
                inner_rounds: vec![InnerRounds::Fixed(5)],
                q: vec![0.3, 0.5, 0.8, 1.0],
                seeds: vec![0, 1, 2],
                stop_tolerance: 0.05,
                ..base
            },
            Preset::Fig2b => ExperimentSpec {
                methods: vec![Method::Ipd, Method::PushDiging],
                eta: vec![Scalar::OverSmoothness(4.0), Scalar::OverSmoothness(16.0)],
                ..base
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [Preset::Fig1a, Preset::Fig1b, Preset::Fig2a, Preset::Fig2b] {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            p.spec().validate().unwrap();
        }
        assert!("fig3".parse::<Preset>().is_err());
    }
}
