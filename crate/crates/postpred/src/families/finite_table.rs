//! Fully tabulated models on small finite spaces: a parameter set of at
//! most 16 points, observation grids of at most 8 points per coordinate,
//! and one probability row per parameter. These are the models for which
//! every posterior and risk quantity can be enumerated exactly, so they
//! anchor the cross-checks of the numeric engine.

use rand::{Rng, RngCore};

use super::FamilyError;
use crate::model::{ModelFamily, Support};
use crate::prior::PriorSpec;

pub const MAX_PARAMS: usize = 16;
pub const MAX_GRID: usize = 8;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTableFamily {
    thetas: Vec<f64>,
    weights: Vec<f64>,
    grid1: Vec<f64>,
    grid2: Vec<f64>,
    /// Row-major `[theta][x1][x2]` probabilities; each theta slice sums to 1.
    probs: Vec<f64>,
}

fn check_grid(name: &'static str, grid: &[f64], cap: usize) -> Result<(), FamilyError> {
    if grid.is_empty() {
        return Err(FamilyError::BadTable(format!("{name} is empty")));
    }
    if grid.len() > cap {
        return Err(FamilyError::BadTable(format!(
            "{name} has {} points, the maximum is {cap}",
            grid.len()
        )));
    }
    for pair in grid.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(FamilyError::BadTable(format!(
                "{name} must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(FamilyError::BadTable(format!("{name} has a non-finite point")));
    }
    Ok(())
}

impl FiniteTableFamily {
    pub fn new(
        thetas: Vec<f64>,
        weights: Vec<f64>,
        grid1: Vec<f64>,
        grid2: Vec<f64>,
        probs: Vec<f64>,
    ) -> Result<Self, FamilyError> {
        if thetas.is_empty() {
            return Err(FamilyError::BadTable("no parameter points".into()));
        }
        if thetas.len() > MAX_PARAMS {
            return Err(FamilyError::BadTable(format!(
                "{} parameter points, the maximum is {MAX_PARAMS}",
                thetas.len()
            )));
        }
        check_grid("parameter grid", &thetas, MAX_PARAMS)?;
        check_grid("grid1", &grid1, MAX_GRID)?;
        check_grid("grid2", &grid2, MAX_GRID)?;
        if weights.len() != thetas.len() {
            return Err(FamilyError::BadTable(format!(
                "{} weights for {} parameter points",
                weights.len(),
                thetas.len()
            )));
        }
        let cells = grid1.len() * grid2.len();
        if probs.len() != thetas.len() * cells {
            return Err(FamilyError::BadTable(format!(
                "{} probabilities, expected {}",
                probs.len(),
                thetas.len() * cells
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(FamilyError::BadTable(format!(
                "probability {bad} is negative or non-finite"
            )));
        }
        let mut probs = probs;
        for (k, row) in probs.chunks_mut(cells).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(FamilyError::BadTable(format!(
                    "row for theta index {k} sums to {sum}, not 1"
                )));
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        let prior = PriorSpec::finite(thetas.clone(), weights).map_err(|e| {
            FamilyError::BadTable(format!("prior weights are invalid: {e}"))
        })?;
        let weights = match &prior {
            PriorSpec::Finite { weights, .. } => weights.clone(),
            _ => unreachable!(),
        };
        Ok(FiniteTableFamily {
            thetas,
            weights,
            grid1,
            grid2,
            probs,
        })
    }

    /// Parses the line-oriented table format. `#` starts a comment, blank
    /// lines are skipped, and the two row kinds are
    /// `theta,<index>,<value>,<weight>` and
    /// `p,<theta index>,<x1>,<x2>,<probability>`. Observation grids are
    /// the sorted distinct coordinates of the `p` rows; unlisted cells
    /// have probability zero.
    pub fn from_text(text: &str) -> Result<Self, FamilyError> {
        struct ThetaRow {
            value: f64,
            weight: f64,
        }
        let mut theta_rows: Vec<Option<ThetaRow>> = Vec::new();
        let mut mass_rows: Vec<(usize, f64, f64, f64)> = Vec::new();

        let parse_f64 = |line: usize, field: &str| -> Result<f64, FamilyError> {
            field.trim().parse::<f64>().map_err(|_| FamilyError::Parse {
                line,
                message: format!("expected a number, got {:?}", field.trim()),
            })
        };
        let parse_usize = |line: usize, field: &str| -> Result<usize, FamilyError> {
            field.trim().parse::<usize>().map_err(|_| FamilyError::Parse {
                line,
                message: format!("expected an index, got {:?}", field.trim()),
            })
        };

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split(',').collect();
            match fields[0].trim() {
                "theta" => {
                    if fields.len() != 4 {
                        return Err(FamilyError::Parse {
                            line,
                            message: format!(
                                "theta rows take 4 fields, got {}",
                                fields.len()
                            ),
                        });
                    }
                    let index = parse_usize(line, fields[1])?;
                    let value = parse_f64(line, fields[2])?;
                    let weight = parse_f64(line, fields[3])?;
                    if index >= MAX_PARAMS {
                        return Err(FamilyError::Parse {
                            line,
                            message: format!(
                                "theta index {index} exceeds the maximum {}",
                                MAX_PARAMS - 1
                            ),
                        });
                    }
                    if theta_rows.len() <= index {
                        theta_rows.resize_with(index + 1, || None);
                    }
                    if theta_rows[index].is_some() {
                        return Err(FamilyError::Parse {
                            line,
                            message: format!("theta index {index} declared twice"),
                        });
                    }
                    theta_rows[index] = Some(ThetaRow { value, weight });
                }
                "p" => {
                    if fields.len() != 5 {
                        return Err(FamilyError::Parse {
                            line,
                            message: format!("p rows take 5 fields, got {}", fields.len()),
                        });
                    }
                    let index = parse_usize(line, fields[1])?;
                    let x1 = parse_f64(line, fields[2])?;
                    let x2 = parse_f64(line, fields[3])?;
                    let prob = parse_f64(line, fields[4])?;
                    if mass_rows
                        .iter()
                        .any(|&(k, a, b, _)| k == index && a == x1 && b == x2)
                    {
                        return Err(FamilyError::Parse {
                            line,
                            message: format!("duplicate cell ({index}, {x1}, {x2})"),
                        });
                    }
                    mass_rows.push((index, x1, x2, prob));
                }
                other => {
                    return Err(FamilyError::Parse {
                        line,
                        message: format!("unknown row kind {other:?}"),
                    });
                }
            }
        }

        let mut thetas = Vec::with_capacity(theta_rows.len());
        let mut weights = Vec::with_capacity(theta_rows.len());
        for (index, row) in theta_rows.iter().enumerate() {
            match row {
                Some(r) => {
                    thetas.push(r.value);
                    weights.push(r.weight);
                }
                None => {
                    return Err(FamilyError::BadTable(format!(
                        "theta index {index} was never declared"
                    )))
                }
            }
        }

        let mut grid1: Vec<f64> = mass_rows.iter().map(|r| r.1).collect();
        let mut grid2: Vec<f64> = mass_rows.iter().map(|r| r.2).collect();
        for grid in [&mut grid1, &mut grid2] {
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }
        if grid1.len() > MAX_GRID || grid2.len() > MAX_GRID {
            return Err(FamilyError::BadTable(format!(
                "observation grids {}x{} exceed the maximum {MAX_GRID} per coordinate",
                grid1.len(),
                grid2.len()
            )));
        }

        let mut probs = vec![0.0; thetas.len() * grid1.len() * grid2.len()];
        for (index, x1, x2, prob) in mass_rows {
            if index >= thetas.len() {
                return Err(FamilyError::BadTable(format!(
                    "p row refers to theta index {index}, but only {} are declared",
                    thetas.len()
                )));
            }
            let i = grid1.iter().position(|&v| v == x1).expect("grid built from rows");
            let j = grid2.iter().position(|&v| v == x2).expect("grid built from rows");
            probs[(index * grid1.len() + i) * grid2.len() + j] = prob;
        }
        FiniteTableFamily::new(thetas, weights, grid1, grid2, probs)
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::Finite {
            points: self.thetas.clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid1(&self) -> &[f64] {
        &self.grid1
    }

    pub fn grid2(&self) -> &[f64] {
        &self.grid2
    }

    pub fn prob(&self, k: usize, i: usize, j: usize) -> f64 {
        self.probs[(k * self.grid1.len() + i) * self.grid2.len() + j]
    }

    pub fn theta_index(&self, theta: f64) -> Option<usize> {
        self.thetas.iter().position(|&v| v == theta)
    }

    pub fn grid1_index(&self, x1: f64) -> Option<usize> {
        self.grid1.iter().position(|&v| v == x1)
    }

    pub fn grid2_index(&self, x2: f64) -> Option<usize> {
        self.grid2.iter().position(|&v| v == x2)
    }
}

impl ModelFamily for FiniteTableFamily {
    fn name(&self) -> &'static str {
        "finite"
    }

    fn param_support(&self) -> Support {
        Support::Finite(self.thetas.clone())
    }

    fn obs_support(&self) -> (Support, Support) {
        (
            Support::Finite(self.grid1.clone()),
            Support::Finite(self.grid2.clone()),
        )
    }

    fn log_joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        self.joint_density(theta, x1, x2).ln()
    }

    fn joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        match (
            self.theta_index(theta),
            self.grid1_index(x1),
            self.grid2_index(x2),
        ) {
            (Some(k), Some(i), Some(j)) => self.prob(k, i, j),
            _ => 0.0,
        }
    }

    fn marginal1_density(&self, theta: f64, x1: f64) -> f64 {
        match (self.theta_index(theta), self.grid1_index(x1)) {
            (Some(k), Some(i)) => (0..self.grid2.len()).map(|j| self.prob(k, i, j)).sum(),
            _ => 0.0,
        }
    }

    fn true_conditional_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        let m = self.marginal1_density(theta, x1);
        if m > 0.0 {
            self.joint_density(theta, x1, x2) / m
        } else {
            0.0
        }
    }

    fn true_conditional_cdf(&self, theta: f64, x1: f64, t: f64) -> f64 {
        let m = self.marginal1_density(theta, x1);
        let (k, i) = match (self.theta_index(theta), self.grid1_index(x1)) {
            (Some(k), Some(i)) => (k, i),
            _ => return 0.0,
        };
        if m <= 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (j, &x2) in self.grid2.iter().enumerate() {
            if x2 <= t {
                acc += self.prob(k, i, j);
            }
        }
        acc / m
    }

    fn true_regression(&self, theta: f64, x1: f64) -> f64 {
        let m = self.marginal1_density(theta, x1);
        let (k, i) = match (self.theta_index(theta), self.grid1_index(x1)) {
            (Some(k), Some(i)) => (k, i),
            _ => return 0.0,
        };
        if m <= 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (j, &x2) in self.grid2.iter().enumerate() {
            acc += x2 * self.prob(k, i, j);
        }
        acc / m
    }

    fn sample_x1(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let k = self.theta_index(theta).expect("theta is a table point");
        let u: f64 = (&mut *rng).random();
        let mut acc = 0.0;
        for (i, &x1) in self.grid1.iter().enumerate() {
            acc += (0..self.grid2.len()).map(|j| self.prob(k, i, j)).sum::<f64>();
            if u < acc {
                return x1;
            }
        }
        *self.grid1.last().expect("non-empty grid")
    }

    fn sample_x2_given(&self, theta: f64, x1: f64, rng: &mut dyn RngCore) -> f64 {
        let k = self.theta_index(theta).expect("theta is a table point");
        let i = self.grid1_index(x1).expect("x1 is a grid point");
        let m = self.marginal1_density(theta, x1);
        let u: f64 = (&mut *rng).random::<f64>() * m;
        let mut acc = 0.0;
        for (j, &x2) in self.grid2.iter().enumerate() {
            acc += self.prob(k, i, j);
            if u < acc {
                return x2;
            }
        }
        *self.grid2.last().expect("non-empty grid")
    }
}

/// Two-parameter table used across the exact-enumeration tests: under
/// `theta = 0` the pair is always `(0, 0)`; under `theta = 1` it is
/// uniform on `{0,1}^2`. Prior weights are 1/2 each.
pub fn two_point_family() -> FiniteTableFamily {
    FiniteTableFamily::new(
        vec![0.0, 1.0],
        vec![0.5, 0.5],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        vec![
            1.0, 0.0, 0.0, 0.0, // theta = 0
            0.25, 0.25, 0.25, 0.25, // theta = 1
        ],
    )
    .expect("valid table")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_pair;
    use crate::model::ParamValue;

    #[test]
    fn two_point_family_basics() {
        let f = two_point_family();
        assert_eq!(f.thetas(), &[0.0, 1.0]);
        assert_eq!(f.joint_density(0.0, 0.0, 0.0), 1.0);
        assert_eq!(f.joint_density(0.0, 1.0, 1.0), 0.0);
        assert_eq!(f.joint_density(1.0, 1.0, 0.0), 0.25);
        assert_eq!(f.marginal1_density(1.0, 0.0), 0.5);
        assert_eq!(f.true_conditional_density(1.0, 0.0, 1.0), 0.5);
        assert_eq!(f.true_regression(1.0, 0.0), 0.5);
        assert_eq!(f.true_regression(0.0, 0.0), 0.0);
        assert_eq!(f.true_conditional_cdf(1.0, 1.0, 0.5), 0.5);
        assert_eq!(f.true_conditional_cdf(1.0, 1.0, 1.0), 1.0);
        assert_eq!(f.true_conditional_cdf(1.0, 1.0, -0.1), 0.0);
    }

    #[test]
    fn rows_are_normalized_and_bad_rows_rejected() {
        let f = FiniteTableFamily::new(
            vec![0.0],
            vec![1.0],
            vec![0.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5 + 4e-10],
        )
        .expect("within tolerance");
        let total = f.prob(0, 0, 0) + f.prob(0, 0, 1);
        assert!((total - 1.0).abs() < 1e-15);

        let err = FiniteTableFamily::new(
            vec![0.0],
            vec![1.0],
            vec![0.0],
            vec![0.0, 1.0],
            vec![0.5, 0.4],
        )
        .unwrap_err();
        assert!(matches!(err, FamilyError::BadTable(_)));
    }

    #[test]
    fn caps_are_enforced() {
        let thetas: Vec<f64> = (0..17).map(|k| k as f64).collect();
        let weights = vec![1.0 / 17.0; 17];
        let probs = vec![1.0; 17];
        let err =
            FiniteTableFamily::new(thetas, weights, vec![0.0], vec![0.0], probs).unwrap_err();
        assert!(matches!(err, FamilyError::BadTable(_)));

        let grid: Vec<f64> = (0..9).map(|k| k as f64).collect();
        let err = FiniteTableFamily::new(
            vec![0.0],
            vec![1.0],
            grid,
            vec![0.0],
            vec![1.0 / 9.0; 9],
        )
        .unwrap_err();
        assert!(matches!(err, FamilyError::BadTable(_)));
    }

    #[test]
    fn text_round_trip() {
        let text = "\
# two-parameter demo table
theta,0,0.0,0.5
theta,1,1.0,0.5
p,0,0,0,1.0
p,1,0,0,0.25
p,1,0,1,0.25
p,1,1,0,0.25  # trailing comment
p,1,1,1,0.25
";
        let parsed = FiniteTableFamily::from_text(text).expect("parses");
        assert_eq!(parsed, two_point_family());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = FiniteTableFamily::from_text("theta,0,0.0,1.0\nbogus,1,2\n").unwrap_err();
        match err {
            FamilyError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }

        let err = FiniteTableFamily::from_text("theta,0,0.0,abc\n").unwrap_err();
        match err {
            FamilyError::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected error {other:?}"),
        }

        let err = FiniteTableFamily::from_text(
            "theta,0,0.0,1.0\np,0,0,0,0.5\np,0,0,0,0.5\n",
        )
        .unwrap_err();
        assert!(matches!(err, FamilyError::Parse { line: 3, .. }));
    }

    #[test]
    fn sampling_stays_on_the_grid() {
        let f = two_point_family();
        let mut rng = crate::stream::substream(3, 9);
        for _ in 0..200 {
            let obs = sample_pair(&f, ParamValue::new(1.0).expect("finite"), &mut rng)
                .expect("in support");
            assert!(f.grid1_index(obs.x1).is_some());
            assert!(f.grid2_index(obs.x2).is_some());
        }
        for _ in 0..50 {
            let obs = sample_pair(&f, ParamValue::new(0.0).expect("finite"), &mut rng)
                .expect("in support");
            assert_eq!((obs.x1, obs.x2), (0.0, 0.0));
        }
    }
}
