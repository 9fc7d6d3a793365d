use super::{split_bounds, ExecModel, KernelError};
use crate::message_passing::Communicator;
use crate::team::Team;
use crate::work_sharing::parallel_map;

const TOTALS: u32 = 10;
const OFFSETS: u32 = 11;
const GATHER: u32 = 12;

fn scan_from(offset: i64, block: &[i64]) -> Vec<i64> {
    block
        .iter()
        .scan(offset, |acc, &x| {
            *acc = acc.wrapping_add(x);
            Some(*acc)
        })
        .collect()
}

/// Inclusive prefix sum with wrapping addition.
///
/// Parallel forms split `a` into one contiguous block per worker, sum each
/// block, scan the block totals, then rescan each block from its offset.
pub fn prefix_sum(a: &[i64], model: ExecModel, team: &Team) -> Result<Vec<i64>, KernelError> {
    let p = team.size();
    let n = a.len();
    let block = |k: usize| {
        let (lo, hi) = split_bounds(k, p, n);
        &a[lo..hi]
    };
    match model {
        ExecModel::Serial => Ok(scan_from(0, a)),
        ExecModel::WorkShare { policy } => {
            // blocks are fixed by position; the policy only decides which
            // worker handles which block
            let totals = parallel_map(team, p, policy, |k| {
                block(k).iter().fold(0i64, |s, &x| s.wrapping_add(x))
            })?;
            let offsets = scan_from(0, &totals);
            let pieces = parallel_map(team, p, policy, |k| {
                let offset = if k == 0 { 0 } else { offsets[k - 1] };
                scan_from(offset, block(k))
            })?;
            Ok(pieces.concat())
        }
        ExecModel::MessagePass => {
            let comm = Communicator::from_env(p)?;
            let mut all = comm.run(team, |ep| {
                let me = ep.rank();
                let mine = block(me);
                let total = mine.iter().fold(0i64, |s, &x| s.wrapping_add(x));
                let offset = if me == 0 {
                    let mut totals = vec![total];
                    for src in 1..p {
                        totals.push(ep.recv_value(src, TOTALS)?);
                    }
                    let mut acc = 0i64;
                    for (dest, t) in totals.iter().enumerate() {
                        if dest > 0 {
                            ep.send_value(dest, OFFSETS, &acc)?;
                        }
                        acc = acc.wrapping_add(*t);
                    }
                    0
                } else {
                    ep.send_value(0, TOTALS, &total)?;
                    ep.recv_value::<i64>(0, OFFSETS)?
                };
                let scanned = scan_from(offset, mine);
                if me != 0 {
                    ep.send_value(0, GATHER, &scanned)?;
                    return Ok(Vec::new());
                }
                let mut out = scanned;
                for src in 1..p {
                    out.extend(ep.recv_value::<Vec<i64>>(src, GATHER)?);
                }
                Ok(out)
            })?;
            Ok(all.swap_remove(0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::random_ints;
    use crate::work_sharing::SchedulePolicy;
    use proptest::prelude::*;

    fn models() -> [ExecModel; 4] {
        [
            ExecModel::Serial,
            ExecModel::MessagePass,
            ExecModel::WorkShare {
                policy: SchedulePolicy::Static { chunk: None },
            },
            ExecModel::WorkShare {
                policy: SchedulePolicy::Guided { min_chunk: 1 },
            },
        ]
    }

    #[test]
    fn examples() {
        let team = Team::with_size(3).unwrap();
        for model in models() {
            assert_eq!(
                prefix_sum(&[1, 2, 3, 4], model, &team).unwrap(),
                vec![1, 3, 6, 10]
            );
            assert_eq!(prefix_sum(&[], model, &team).unwrap(), Vec::<i64>::new());
            assert_eq!(prefix_sum(&[-5], model, &team).unwrap(), vec![-5]);
        }
    }

    #[test]
    fn wraps_on_overflow() {
        let team = Team::with_size(2).unwrap();
        for model in models() {
            assert_eq!(
                prefix_sum(&[i64::MAX, 1], model, &team).unwrap(),
                vec![i64::MAX, i64::MIN]
            );
        }
    }

    #[test]
    fn fewer_elements_than_workers() {
        let team = Team::with_size(8).unwrap();
        for model in models() {
            assert_eq!(prefix_sum(&[2, 2, 2], model, &team).unwrap(), vec![2, 4, 6]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_serial_and_last_is_total(n in 0usize..300, p in 1usize..6, seed: u64) {
            let a = random_ints(n, seed);
            let team = Team::with_size(p).unwrap();
            let oracle = prefix_sum(&a, ExecModel::Serial, &team).unwrap();
            prop_assert_eq!(oracle.last().copied().unwrap_or(0), a.iter().sum::<i64>());
            for model in models() {
                prop_assert_eq!(&prefix_sum(&a, model, &team).unwrap(), &oracle);
            }
        }
    }
}
