use std::sync::atomic::{AtomicU64, Ordering};

use super::{map_indices, reduce_indices, ExecModel, KernelError};
use crate::team::Team;
use crate::work_sharing::ReductionOp;

fn integrand(x: f64) -> f64 {
    4.0 / (1.0 + x * x)
}

/// Sum of all elements.
pub fn vector_sum(a: &[f64], model: ExecModel, team: &Team) -> Result<f64, KernelError> {
    reduce_indices(a.len(), model, team, ReductionOp::Sum, |i| a[i])
}

/// Midpoint-rule estimate of pi from `n` subintervals of `[0, 1]`.
pub fn pi_rectangle(n: usize, model: ExecModel, team: &Team) -> Result<f64, KernelError> {
    if n == 0 {
        return Err(KernelError::InvalidInput("pi-rect needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let sum = reduce_indices(n, model, team, ReductionOp::Sum, |i| {
        integrand((i as f64 + 0.5) * h)
    })?;
    Ok(sum * h)
}

/// Composite Simpson estimate of pi with `n` (even) subintervals.
pub fn pi_simpson(n: usize, model: ExecModel, team: &Team) -> Result<f64, KernelError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(KernelError::InvalidInput(format!(
            "pi-simpson needs an even n >= 2, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let sum = reduce_indices(n + 1, model, team, ReductionOp::Sum, |i| {
        let weight = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        weight * integrand(i as f64 * h)
    })?;
    Ok(sum * h / 3.0)
}

/// Prefix means `B[i] = (A[0] + ... + A[i]) / (i + 1)`.
///
/// Each `B[i]` is summed from scratch, so iteration `i` costs `i + 1`
/// additions and the total work is triangular.
pub fn running_average(a: &[f64], model: ExecModel, team: &Team) -> Result<Vec<f64>, KernelError> {
    running_average_counted(a, model, team).map(|(b, _)| b)
}

/// [`running_average`] plus the number of element additions performed.
pub fn running_average_counted(
    a: &[f64],
    model: ExecModel,
    team: &Team,
) -> Result<(Vec<f64>, u64), KernelError> {
    let ops = AtomicU64::new(0);
    let out = map_indices(a.len(), model, team, |i| {
        let mut sum = 0.0;
        for &x in &a[..=i] {
            sum += x;
        }
        ops.fetch_add(i as u64 + 1, Ordering::Relaxed);
        sum / (i + 1) as f64
    })?;
    Ok((out, ops.into_inner()))
}

/// Trial-division primality test.
pub fn is_prime(k: u64) -> bool {
    if k < 2 {
        return false;
    }
    if k < 4 {
        return true;
    }
    if k.is_multiple_of(2) {
        return false;
    }
    let mut d = 3;
    while d * d <= k {
        if k.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Number of primes `<= n`, testing each candidate independently.
pub fn prime_count(n: u64, model: ExecModel, team: &Team) -> Result<u64, KernelError> {
    let extent = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_add(1))
        .ok_or_else(|| KernelError::InvalidInput(format!("n = {n} too large")))?;
    reduce_indices(extent, model, team, ReductionOp::Sum, |i| {
        is_prime(i as u64) as u64
    })
}
