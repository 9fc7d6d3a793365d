use std::fmt;
use std::str::FromStr;

/// Associative, commutative combining operator for reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReductionOp {
    Sum,
    Prod,
    Max,
    Min,
}

impl ReductionOp {
    pub fn identity<T: Reducible>(self) -> T {
        T::identity(self)
    }

    pub fn combine<T: Reducible>(self, acc: T, x: T) -> T {
        T::combine(self, acc, x)
    }

    /// Left fold seeded with the identity.
    pub fn fold<T: Reducible, I: IntoIterator<Item = T>>(self, items: I) -> T {
        items
            .into_iter()
            .fold(self.identity(), |acc, x| self.combine(acc, x))
    }
}

impl fmt::Display for ReductionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionOp::Sum => "sum",
            ReductionOp::Prod => "prod",
            ReductionOp::Max => "max",
            ReductionOp::Min => "min",
        })
    }
}

impl FromStr for ReductionOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sum" | "+" => Ok(ReductionOp::Sum),
            "prod" | "*" => Ok(ReductionOp::Prod),
            "max" => Ok(ReductionOp::Max),
            "min" => Ok(ReductionOp::Min),
            _ => Err(format!("unknown reduction operator {s:?}")),
        }
    }
}

/// Values that can take part in a reduction.
///
/// Integer sums and products wrap, so the combine stays associative for
/// every input.
pub trait Reducible: Copy + Send + Sync {
    fn identity(op: ReductionOp) -> Self;
    fn combine(op: ReductionOp, acc: Self, x: Self) -> Self;
}

impl Reducible for f64 {
    fn identity(op: ReductionOp) -> Self {
        match op {
            ReductionOp::Sum => 0.0,
            ReductionOp::Prod => 1.0,
            ReductionOp::Max => f64::NEG_INFINITY,
            ReductionOp::Min => f64::INFINITY,
        }
    }

    fn combine(op: ReductionOp, acc: Self, x: Self) -> Self {
        match op {
            ReductionOp::Sum => acc + x,
            ReductionOp::Prod => acc * x,
            ReductionOp::Max => acc.max(x),
            ReductionOp::Min => acc.min(x),
        }
    }
}

macro_rules! int_reducible {
    ($($t:ty),*) => {$(
        impl Reducible for $t {
            fn identity(op: ReductionOp) -> Self {
                match op {
                    ReductionOp::Sum => 0,
                    ReductionOp::Prod => 1,
                    ReductionOp::Max => <$t>::MIN,
                    ReductionOp::Min => <$t>::MAX,
                }
            }

            fn combine(op: ReductionOp, acc: Self, x: Self) -> Self {
                match op {
                    ReductionOp::Sum => acc.wrapping_add(x),
                    ReductionOp::Prod => acc.wrapping_mul(x),
                    ReductionOp::Max => acc.max(x),
                    ReductionOp::Min => acc.min(x),
                }
            }
        }
    )*};
}

int_reducible!(i64, u64, usize);
