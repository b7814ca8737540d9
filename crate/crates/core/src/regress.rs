//! Ordinary least squares with Gaussian log-likelihood, log-likelihood
//! differences between nested fits, predicted-RT effect estimates with an
//! item bootstrap, and a paired sign-flip permutation test.
//!
//! Random intercepts are approximated by optional fixed indicator blocks and
//! smooth terms by linear (optionally quadratic) columns.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::RegressionRow;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Surp,
    SurpPrev1,
    SurpPrev2,
    Freq,
    FreqPrev1,
    FreqPrev2,
    Length,
    LengthSq,
    Index,
    IndexSq,
    Slength,
    Pfix,
    Prev1Missing,
    Prev2Missing,
}

impl Predictor {
    pub const ALL: [Predictor; 14] = [
        Predictor::Surp,
        Predictor::SurpPrev1,
        Predictor::SurpPrev2,
        Predictor::Freq,
        Predictor::FreqPrev1,
        Predictor::FreqPrev2,
        Predictor::Length,
        Predictor::LengthSq,
        Predictor::Index,
        Predictor::IndexSq,
        Predictor::Slength,
        Predictor::Pfix,
        Predictor::Prev1Missing,
        Predictor::Prev2Missing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::Surp => "surp",
            Predictor::SurpPrev1 => "surp_prev1",
            Predictor::SurpPrev2 => "surp_prev2",
            Predictor::Freq => "freq",
            Predictor::FreqPrev1 => "freq_prev1",
            Predictor::FreqPrev2 => "freq_prev2",
            Predictor::Length => "length",
            Predictor::LengthSq => "length_sq",
            Predictor::Index => "index",
            Predictor::IndexSq => "index_sq",
            Predictor::Slength => "slength",
            Predictor::Pfix => "pfix",
            Predictor::Prev1Missing => "prev1_missing",
            Predictor::Prev2Missing => "prev2_missing",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn is_indicator(self) -> bool {
        matches!(self, Predictor::Prev1Missing | Predictor::Prev2Missing)
    }

    fn value<T: Scalar>(self, r: &RegressionRow<T>) -> Option<T> {
        Some(match self {
            Predictor::Surp => r.surp,
            Predictor::SurpPrev1 => r.surp_prev1,
            Predictor::SurpPrev2 => r.surp_prev2,
            Predictor::Freq => r.freq,
            Predictor::FreqPrev1 => r.freq_prev1,
            Predictor::FreqPrev2 => r.freq_prev2,
            Predictor::Length => r.length,
            Predictor::LengthSq => r.length * r.length,
            Predictor::Index => r.index,
            Predictor::IndexSq => r.index * r.index,
            Predictor::Slength => return r.slength,
            Predictor::Pfix => return r.pfix,
            Predictor::Prev1Missing => r.prev1_missing,
            Predictor::Prev2Missing => r.prev2_missing,
        })
    }
}

/// Which columns to assemble from regression rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DesignSpec {
    pub predictors: Vec<Predictor>,
    /// One indicator per subject except the first (by sorted id).
    pub subject_intercepts: bool,
    /// One indicator per item except the first (by sorted id).
    pub item_intercepts: bool,
}

impl DesignSpec {
    pub fn new(predictors: impl IntoIterator<Item = Predictor>) -> Self {
        DesignSpec {
            predictors: predictors.into_iter().collect(),
            subject_intercepts: false,
            item_intercepts: false,
        }
    }

    /// Linking model for filler items: surprisal and frequency with two
    /// words of spillover, length and position.
    pub fn filler() -> Self {
        use Predictor::*;
        Self::new([
            Surp,
            SurpPrev1,
            SurpPrev2,
            Length,
            Freq,
            FreqPrev1,
            FreqPrev2,
            Index,
            Prev1Missing,
            Prev2Missing,
        ])
    }

    /// Baseline for self-paced reading: length and position.
    pub fn spr_base() -> Self {
        Self::new([Predictor::Length, Predictor::Index])
    }

    /// Baseline for go-past durations: adds saccade length and previous fixation.
    pub fn gpd_base() -> Self {
        Self::new([Predictor::Length, Predictor::Index, Predictor::Slength, Predictor::Pfix])
    }

    pub fn with(mut self, p: Predictor) -> Self {
        if !self.predictors.contains(&p) {
            self.predictors.push(p);
        }
        self
    }

    pub fn without(mut self, p: Predictor) -> Self {
        self.predictors.retain(|&q| q != p);
        self
    }

    /// Adds squared length and position terms.
    pub fn quadratic(self) -> Self {
        self.with(Predictor::LengthSq).with(Predictor::IndexSq)
    }

    pub fn with_subject_intercepts(mut self, on: bool) -> Self {
        self.subject_intercepts = on;
        self
    }

    pub fn with_item_intercepts(mut self, on: bool) -> Self {
        self.item_intercepts = on;
        self
    }
}

/// `n × p` predictors (row-major, no intercept column) and the response.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix<T> {
    names: Vec<String>,
    n: usize,
    x: Vec<T>,
    y: Vec<T>,
}

fn level_column(name: &str) -> Option<(&str, &str)> {
    let (kind, rest) = name.split_once('[')?;
    let level = rest.strip_suffix(']')?;
    matches!(kind, "subject" | "item").then_some((kind, level))
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(names: Vec<String>, rows: Vec<Vec<T>>, y: Vec<T>) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Design(format!("{} rows but {} responses", rows.len(), y.len())));
        }
        let p = names.len();
        let mut x = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != p {
                return Err(Error::Design(format!("row {i} has {} values for {p} columns", r.len())));
            }
            x.extend(r);
        }
        Self::from_parts(names, x, y)
    }

    fn from_parts(names: Vec<String>, x: Vec<T>, y: Vec<T>) -> Result<Self> {
        let n = y.len();
        let p = names.len();
        debug_assert_eq!(x.len(), n * p);
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Design(format!(
                "non-finite value in row {}, column {}",
                i / p.max(1),
                names[i % p.max(1)]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Design(format!("non-finite response in row {i}")));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Design(format!("duplicate column {dup}")));
        }
        Ok(DesignMatrix { names, n, x, y })
    }

    /// Assembles the columns of `spec`. Missing-predecessor indicators that
    /// are zero on every row are left out.
    pub fn from_rows(rows: &[RegressionRow<T>], spec: &DesignSpec) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        for &p in &spec.predictors {
            if p.is_indicator() && rows.iter().all(|r| p.value(r) == Some(T::zero())) {
                continue;
            }
            names.push(p.name().to_owned());
        }
        let mut levels = |on: bool, kind: &str, get: fn(&RegressionRow<T>) -> &str| {
            if on {
                let set: BTreeSet<&str> = rows.iter().map(get).collect();
                names.extend(set.into_iter().skip(1).map(|l| format!("{kind}[{l}]")));
            }
        };
        levels(spec.subject_intercepts, "subject", |r| r.subject.as_str());
        levels(spec.item_intercepts, "item", |r| r.item.as_str());
        Self::for_columns(rows, &names)
    }

    /// Assembles exactly the named columns, e.g. those of an existing fit.
    /// Indicator columns for levels absent from `rows` are all zero.
    pub fn for_columns(rows: &[RegressionRow<T>], names: &[String]) -> Result<Self> {
        enum Col<'a> {
            Pred(Predictor),
            Subject(&'a str),
            Item(&'a str),
        }
        let cols = names
            .iter()
            .map(|name| {
                if let Some(p) = Predictor::from_name(name) {
                    Ok(Col::Pred(p))
                } else {
                    match level_column(name) {
                        Some(("subject", l)) => Ok(Col::Subject(l)),
                        Some(("item", l)) => Ok(Col::Item(l)),
                        _ => Err(Error::Design(format!("unknown column {name}"))),
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let ind = |b: bool| if b { T::one() } else { T::zero() };
        let mut x = Vec::with_capacity(rows.len() * names.len());
        for (i, r) in rows.iter().enumerate() {
            for (c, name) in cols.iter().zip(names) {
                x.push(match c {
                    Col::Pred(p) => p
                        .value(r)
                        .ok_or_else(|| Error::Design(format!("row {i} has no value for {name}")))?,
                    Col::Subject(l) => ind(r.subject == *l),
                    Col::Item(l) => ind(r.item == *l),
                });
            }
        }
        Self::from_parts(names.to_vec(), x, rows.iter().map(|r| r.response).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[T] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn column(&self, name: &str) -> Option<Vec<T>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((0..self.n).map(|i| self.x[i * self.p() + j]).collect())
    }

    /// Copy with one column's values replaced.
    pub fn with_column(&self, name: &str, values: &[T]) -> Result<Self> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Design(format!("no column {name}")))?;
        if values.len() != self.n {
            return Err(Error::Design(format!("{} values for {} rows", values.len(), self.n)));
        }
        let mut out = self.clone();
        let p = self.p();
        for (i, &v) in values.iter().enumerate() {
            out.x[i * p + j] = v;
        }
        Ok(out)
    }

    pub fn with_response(&self, y: Vec<T>) -> Result<Self> {
        if y.len() != self.n {
            return Err(Error::Design(format!("{} responses for {} rows", y.len(), self.n)));
        }
        Self::from_parts(self.names.clone(), self.x.clone(), y)
    }
}

/// Least-squares fit with an intercept.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult<T> {
    pub names: Vec<String>,
    pub intercept: T,
    pub coefficients: Vec<T>,
    /// Columns that are zero on every row; their coefficients are fixed at 0.
    pub zero_columns: Vec<String>,
    /// Maximum-likelihood residual variance, `RSS / n`.
    pub sigma2: T,
    /// `RSS / (n − p − 1)`, for reporting.
    pub sigma2_unbiased: T,
    pub rss: T,
    /// `−n/2 · (ln(2π σ̂²) + 1)`; absent for a perfect fit.
    pub log_likelihood: Option<T>,
    pub perfect_fit: bool,
    pub n: usize,
    pub p: usize,
}

impl<T: Scalar> FitResult<T> {
    pub fn coefficient(&self, name: &str) -> Option<T> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.coefficients[j])
    }
}

/// Fits `y ~ 1 + X` by Householder QR with column pivoting on unit-scaled
/// columns. Columns whose residual norm after pivoting falls below
/// `sqrt(ε)` are reported as collinear; columns that are exactly zero are
/// kept with coefficient 0 so a null predictor leaves the fit unchanged.
pub fn fit_ols<T: Scalar>(design: &DesignMatrix<T>) -> Result<FitResult<T>> {
    let n = design.n();
    let p = design.p();
    let k = p + 1;
    if n <= k {
        return Err(Error::Design(format!("{n} observations cannot identify {k} coefficients")));
    }
    // identically zero columns carry no information; they get coefficient 0
    let (active, zero_columns): (Vec<usize>, Vec<usize>) =
        (0..p).partition(|&j| (0..n).any(|i| design.x[i * p + j] != T::zero()));
    let k = active.len() + 1;
    let column_name = |m: usize| {
        if m == 0 {
            "(intercept)".to_owned()
        } else {
            design.names[active[m - 1]].clone()
        }
    };

    // column-major copy with the intercept first
    let mut a: Vec<Vec<T>> = Vec::with_capacity(k);
    a.push(vec![T::one(); n]);
    for &j in &active {
        a.push((0..n).map(|i| design.x[i * p + j]).collect());
    }
    let scale: Vec<T> = a
        .iter()
        .map(|c| {
            let norm = c.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > T::zero() {
                norm
            } else {
                T::one()
            }
        })
        .collect();
    for (c, &s) in a.iter_mut().zip(&scale) {
        c.iter_mut().for_each(|v| *v = *v / s);
    }
    let mut qty = design.y.clone();
    let mut perm: Vec<usize> = (0..k).collect();
    let tol = T::epsilon().sqrt();

    let mut rank = k;
    for j in 0..k {
        let (best, best_norm) = (j..k)
            .map(|c| (c, a[c][j..].iter().map(|&v| v * v).sum::<T>().sqrt()))
            .fold((j, -T::one()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_norm <= tol {
            rank = j;
            break;
        }
        a.swap(j, best);
        perm.swap(j, best);

        let x0 = a[j][j];
        let alpha = if x0 >= T::zero() { -best_norm } else { best_norm };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2: T = v.iter().map(|&t| t * t).sum();
        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            let reflect = |col: &mut [T]| {
                let s: T = col.iter().zip(&v).map(|(&c, &vi)| c * vi).sum();
                let f = two * s / vnorm2;
                col.iter_mut().zip(&v).for_each(|(c, &vi)| *c = *c - f * vi);
            };
            for col in a.iter_mut().skip(j + 1) {
                reflect(&mut col[j..]);
            }
            reflect(&mut qty[j..]);
        }
        a[j][j] = alpha;
        a[j][j + 1..].iter_mut().for_each(|v| *v = T::zero());
    }
    if rank < k {
        let mut columns: Vec<String> = perm[rank..].iter().map(|&j| column_name(j)).collect();
        columns.sort();
        return Err(Error::SingularDesign { columns });
    }

    // back substitution on R (stored as a[col][row])
    let mut beta_piv = vec![T::zero(); k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for c in i + 1..k {
            s = s - a[c][i] * beta_piv[c];
        }
        beta_piv[i] = s / a[i][i];
    }
    let mut beta = vec![T::zero(); k];
    for (pos, &j) in perm.iter().enumerate() {
        beta[j] = beta_piv[pos] / scale[j];
    }

    let intercept = beta[0];
    let mut coefficients = vec![T::zero(); p];
    for (m, &j) in active.iter().enumerate() {
        coefficients[j] = beta[m + 1];
    }
    let fitted = linear_predict(design, intercept, &coefficients);
    let rss: T = design
        .y
        .iter()
        .zip(&fitted)
        .map(|(&y, &f)| (y - f) * (y - f))
        .sum();
    let nt = T::from_usize_lossy(n);
    let sigma2 = rss / nt;
    let ymax = design.y.iter().fold(T::one(), |m, &y| m.max(y.abs()));
    let floor = T::lit(1024.0) * T::epsilon() * ymax;
    let perfect_fit = rss <= nt * floor * floor;
    let log_likelihood = (!perfect_fit)
        .then(|| -nt / T::lit(2.0) * ((T::lit(2.0) * T::PI() * sigma2).ln() + T::one()));
    Ok(FitResult {
        names: design.names.clone(),
        intercept,
        coefficients,
        zero_columns: zero_columns.iter().map(|&j| design.names[j].clone()).collect(),
        sigma2,
        sigma2_unbiased: rss / T::from_usize_lossy(n - k),
        rss,
        log_likelihood,
        perfect_fit,
        n,
        p,
    })
}

fn linear_predict<T: Scalar>(design: &DesignMatrix<T>, intercept: T, coef: &[T]) -> Vec<T> {
    (0..design.n())
        .map(|i| {
            design
                .row(i)
                .iter()
                .zip(coef)
                .fold(intercept, |acc, (&x, &b)| acc + x * b)
        })
        .collect()
}

/// `X·β + intercept` for a design with the fit's columns.
pub fn predict<T: Scalar>(fit: &FitResult<T>, design: &DesignMatrix<T>) -> Result<Vec<T>> {
    if design.names != fit.names {
        return Err(Error::Design(format!(
            "columns [{}] do not match the fit's [{}]",
            design.names.join(", "),
            fit.names.join(", ")
        )));
    }
    Ok(linear_predict(design, fit.intercept, &fit.coefficients))
}

/// `y − ŷ` for each row of `design`.
pub fn residuals<T: Scalar>(fit: &FitResult<T>, design: &DesignMatrix<T>) -> Result<Vec<T>> {
    let pred = predict(fit, design)?;
    Ok(design.y.iter().zip(pred).map(|(&y, f)| y - f).collect())
}

/// Log-likelihood gain of `full` over the nested `base` fit.
pub fn delta_ll<T: Scalar>(base: &FitResult<T>, full: &FitResult<T>) -> Result<T> {
    if base.n != full.n {
        return Err(Error::Comparison(format!("fits use {} and {} observations", base.n, full.n)));
    }
    if let Some(missing) = base.names.iter().find(|n| !full.names.contains(n)) {
        return Err(Error::Comparison(format!("base column {missing} is not in the full model")));
    }
    match (base.log_likelihood, full.log_likelihood) {
        (Some(b), Some(f)) => Ok(f - b),
        _ => Err(Error::Comparison("log-likelihood of a perfect fit is unbounded".into())),
    }
}

/// One predicted reading time with its grouping labels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictedRt<T> {
    pub subject: String,
    pub item: String,
    pub condition: String,
    pub region: String,
    pub pred: T,
}

#[derive(Clone, Debug)]
pub struct EffectOptions {
    pub treatment: String,
    pub control: String,
    pub n_boot: usize,
    pub seed: u64,
    pub level: f64,
}

impl EffectOptions {
    pub fn new(seed: u64) -> Self {
        EffectOptions {
            treatment: "ambiguous".into(),
            control: "unambiguous".into(),
            n_boot: 2000,
            seed,
            level: 0.95,
        }
    }
}

/// Mean predicted-RT difference (treatment − control) in one region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectEstimate<T> {
    pub region: String,
    pub effect: T,
    /// Half the width of the percentile bootstrap interval.
    pub ci_half_width: T,
    pub ci_low: T,
    pub ci_high: T,
    pub n_items: usize,
    pub n_boot: usize,
}

#[derive(Clone, Copy, Default)]
struct CellSums<T> {
    treat_sum: T,
    treat_n: usize,
    ctrl_sum: T,
    ctrl_n: usize,
}

/// Condition-mean difference in `region` with a percentile bootstrap over
/// items. Items are resampled with replacement in sorted-id order, so the
/// estimate does not depend on row order or subject labels.
pub fn garden_path_effect<T: Scalar>(
    preds: &[PredictedRt<T>],
    region: &str,
    opts: &EffectOptions,
) -> Result<EffectEstimate<T>> {
    let mut cells: BTreeMap<&str, CellSums<T>> = BTreeMap::new();
    for p in preds.iter().filter(|p| p.region == region) {
        let c = cells.entry(p.item.as_str()).or_insert(CellSums {
            treat_sum: T::zero(),
            treat_n: 0,
            ctrl_sum: T::zero(),
            ctrl_n: 0,
        });
        if p.condition == opts.treatment {
            c.treat_sum = c.treat_sum + p.pred;
            c.treat_n += 1;
        } else if p.condition == opts.control {
            c.ctrl_sum = c.ctrl_sum + p.pred;
            c.ctrl_n += 1;
        }
    }
    let cells: Vec<CellSums<T>> = cells.into_values().collect();
    let diff = |picked: &mut dyn Iterator<Item = &CellSums<T>>| -> Option<T> {
        let (mut ts, mut tn, mut cs, mut cn) = (T::zero(), 0usize, T::zero(), 0usize);
        for c in picked {
            ts = ts + c.treat_sum;
            tn += c.treat_n;
            cs = cs + c.ctrl_sum;
            cn += c.ctrl_n;
        }
        (tn > 0 && cn > 0).then(|| ts / T::from_usize_lossy(tn) - cs / T::from_usize_lossy(cn))
    };
    let effect = diff(&mut cells.iter()).ok_or_else(|| {
        Error::Estimation(format!(
            "region {region:?} lacks observations for {:?} or {:?}",
            opts.treatment, opts.control
        ))
    })?;
    if opts.n_boot == 0 {
        return Err(Error::Estimation("bootstrap needs at least one resample".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let m = cells.len();
    let mut stats = Vec::with_capacity(opts.n_boot);
    for _ in 0..opts.n_boot {
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
        if let Some(d) = diff(&mut idx.iter().map(|&i| &cells[i])) {
            stats.push(d);
        }
    }
    if stats.is_empty() {
        return Err(Error::Estimation("no bootstrap resample contained both conditions".into()));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap statistic"));
    let b = stats.len();
    let alpha = (1.0 - opts.level) / 2.0;
    let lo = ((alpha * b as f64).floor() as usize).min(b - 1);
    let hi = (((1.0 - alpha) * b as f64).ceil() as usize).saturating_sub(1).min(b - 1);
    let (ci_low, ci_high) = (stats[lo], stats[hi]);
    Ok(EffectEstimate {
        region: region.to_owned(),
        effect,
        ci_half_width: (ci_high - ci_low) / T::lit(2.0),
        ci_low,
        ci_high,
        n_items: m,
        n_boot: b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PermutationResult<T> {
    pub p_value: T,
    /// Mean of `a − b` over groups.
    pub observed: T,
    pub n_groups: usize,
    /// All `2^groups` sign patterns were evaluated.
    pub exact: bool,
    /// Sign patterns evaluated.
    pub n_permutations: usize,
    pub two_sided: bool,
}

/// Paired two-sided sign-flip test on per-group values.
///
/// When `2^groups ≤ n_perm` every sign pattern is enumerated and the p-value
/// is the exact fraction of patterns at least as extreme as the observed
/// one. Otherwise `n_perm` random patterns are drawn and
/// `p = (extreme + 1) / (n_perm + 1)`.
pub fn permutation_test<T: Scalar>(
    a: &BTreeMap<String, T>,
    b: &BTreeMap<String, T>,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationResult<T>> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::Comparison("per-group errors do not cover the same groups".into()));
    }
    let d: Vec<T> = a.values().zip(b.values()).map(|(&x, &y)| x - y).collect();
    let g = d.len();
    if g == 0 {
        return Err(Error::Comparison("no groups".into()));
    }
    let gt = T::from_usize_lossy(g);
    let observed = d.iter().copied().sum::<T>() / gt;
    let threshold = observed.abs() * (T::one() - T::epsilon() * T::lit(64.0));
    let extreme = |signs: &mut dyn FnMut(usize) -> bool| {
        let s: T = d
            .iter()
            .enumerate()
            .map(|(i, &x)| if signs(i) { -x } else { x })
            .sum();
        (s / gt).abs() >= threshold
    };

    let exhaustive = g < usize::BITS as usize - 1 && (1usize << g) <= n_perm.max(1);
    if exhaustive {
        let total = 1usize << g;
        let count = (0..total)
            .filter(|&mask| extreme(&mut |i| mask >> i & 1 == 1))
            .count();
        return Ok(PermutationResult {
            p_value: T::from_usize_lossy(count) / T::from_usize_lossy(total),
            observed,
            n_groups: g,
            exact: true,
            n_permutations: total,
            two_sided: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    for _ in 0..n_perm {
        let flips: Vec<bool> = (0..g).map(|_| rng.random_bool(0.5)).collect();
        if extreme(&mut |i| flips[i]) {
            count += 1;
        }
    }
    Ok(PermutationResult {
        p_value: T::from_usize_lossy(count + 1) / T::from_usize_lossy(n_perm + 1),
        observed,
        n_groups: g,
        exact: false,
        n_permutations: n_perm,
        two_sided: true,
    })
}
