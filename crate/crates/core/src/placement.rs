//! Page placement simulator.
//!
//! An array is a flat run of elements grouped into fixed-size pages. Pages
//! are assigned to memory nodes by a [`Distribution`], and a trace of
//! `(element, node)` accesses is scored by how many hit a page on the
//! accessing node. Nothing here touches real memory.

use std::io::{Read, Write};

use thiserror::Error;

use crate::work_sharing::{plan_static, round_robin_claims, ChunkError, Claim, SchedulePolicy};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("array extent must be positive")]
    EmptyArray,
    #[error("elements per page must be positive")]
    ZeroPageSize,
    #[error("at least one memory node is required")]
    NoNodes,
    #[error("element {element} out of range for extent {extent}")]
    ElementOutOfRange { element: usize, extent: usize },
    #[error("node {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("page map has {actual} pages, array has {expected}")]
    PageCountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error("trace: {0}")]
    Trace(#[from] csv::Error),
}

/// Shape of the distributed array, flattened along its distributed axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayDescriptor {
    extent: usize,
    elements_per_page: usize,
}

impl ArrayDescriptor {
    pub fn new(extent: usize, elements_per_page: usize) -> Result<Self, PlacementError> {
        if extent == 0 {
            return Err(PlacementError::EmptyArray);
        }
        if elements_per_page == 0 {
            return Err(PlacementError::ZeroPageSize);
        }
        Ok(Self {
            extent,
            elements_per_page,
        })
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn elements_per_page(&self) -> usize {
        self.elements_per_page
    }

    pub fn pages(&self) -> usize {
        self.extent.div_ceil(self.elements_per_page)
    }

    pub fn page_of(&self, element: usize) -> Result<usize, PlacementError> {
        if element >= self.extent {
            return Err(PlacementError::ElementOutOfRange {
                element,
                extent: self.extent,
            });
        }
        Ok(element / self.elements_per_page)
    }
}

/// One access: `node` reads or writes `element`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Access {
    pub element: usize,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Distribution {
    /// Contiguous runs of pages per node.
    Block,
    /// Page `k` on node `k mod nodes`.
    Cyclic,
    /// Each page lands on the first node to touch it; untouched pages go to
    /// node 0.
    FirstTouch { trace: Vec<Access> },
}

/// Page to node assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageMap {
    nodes: usize,
    owner: Vec<usize>,
}

impl PageMap {
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn pages(&self) -> usize {
        self.owner.len()
    }

    pub fn node_of(&self, page: usize) -> Option<usize> {
        self.owner.get(page).copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.owner
    }
}

pub fn place_pages(
    desc: &ArrayDescriptor,
    dist: &Distribution,
    nodes: usize,
) -> Result<PageMap, PlacementError> {
    if nodes == 0 {
        return Err(PlacementError::NoNodes);
    }
    let pages = desc.pages();
    let owner = match dist {
        Distribution::Block => {
            let per_node = pages.div_ceil(nodes);
            (0..pages).map(|k| k / per_node).collect()
        }
        Distribution::Cyclic => (0..pages).map(|k| k % nodes).collect(),
        Distribution::FirstTouch { trace } => {
            let mut owner: Vec<Option<usize>> = vec![None; pages];
            for a in trace {
                check_node(a.node, nodes)?;
                let page = desc.page_of(a.element)?;
                owner[page].get_or_insert(a.node);
            }
            owner.into_iter().map(|o| o.unwrap_or(0)).collect()
        }
    };
    Ok(PageMap { nodes, owner })
}

fn check_node(node: usize, nodes: usize) -> Result<(), PlacementError> {
    if node >= nodes {
        return Err(PlacementError::NodeOutOfRange { node, nodes });
    }
    Ok(())
}

/// Access trace of a loop over `[0, extent)`: one record per iteration,
/// tagged with the worker that runs it.
///
/// Static schedules come straight from the static plan, in element order.
/// Dynamic and guided schedules have no fixed assignment, so the trace
/// follows a round-robin claim log; use [`claims_access_trace`] to score a
/// log recorded from a real run instead.
pub fn schedule_access_trace(
    extent: usize,
    policy: SchedulePolicy,
    workers: usize,
) -> Result<Vec<Access>, PlacementError> {
    if workers == 0 {
        return Err(ChunkError::NoWorkers.into());
    }
    match policy {
        SchedulePolicy::Static { chunk } => {
            if chunk == Some(0) {
                return Err(ChunkError::ZeroChunk.into());
            }
            let mut trace: Vec<Access> = plan_static(extent, workers, chunk)
                .into_iter()
                .enumerate()
                .flat_map(|(node, ranges)| {
                    ranges
                        .into_iter()
                        .flat_map(move |r| r.iter().map(move |element| Access { element, node }))
                })
                .collect();
            trace.sort_unstable_by_key(|a| a.element);
            Ok(trace)
        }
        SchedulePolicy::Runtime => Err(ChunkError::UnresolvedRuntime.into()),
        dynamic => Ok(claims_access_trace(&round_robin_claims(
            dynamic, extent, workers,
        )?)),
    }
}

/// Trace of a recorded claim log, in log order.
pub fn claims_access_trace(claims: &[Claim]) -> Vec<Access> {
    claims
        .iter()
        .flat_map(|c| {
            c.range.iter().map(move |element| Access {
                element,
                node: c.worker,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalityReport {
    pub local_accesses: u64,
    pub remote_accesses: u64,
}

impl LocalityReport {
    pub fn total(&self) -> u64 {
        self.local_accesses + self.remote_accesses
    }

    /// Local share of all accesses; 1.0 for an empty trace.
    pub fn locality_fraction(&self) -> f64 {
        match self.total() {
            0 => 1.0,
            t => self.local_accesses as f64 / t as f64,
        }
    }
}

pub fn locality_cost(
    map: &PageMap,
    desc: &ArrayDescriptor,
    trace: &[Access],
) -> Result<LocalityReport, PlacementError> {
    if map.pages() != desc.pages() {
        return Err(PlacementError::PageCountMismatch {
            expected: desc.pages(),
            actual: map.pages(),
        });
    }
    let mut report = LocalityReport {
        local_accesses: 0,
        remote_accesses: 0,
    };
    for a in trace {
        let page = desc.page_of(a.element)?;
        if map.owner[page] == a.node {
            report.local_accesses += 1;
        } else {
            report.remote_accesses += 1;
        }
    }
    Ok(report)
}

/// Reads `element,node` records. A leading `element,node` header line is
/// optional.
pub fn read_trace<R: Read>(input: R) -> Result<Vec<Access>, PlacementError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut trace = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i == 0 && record.get(0) == Some("element") {
            continue;
        }
        trace.push(record.deserialize(None)?);
    }
    Ok(trace)
}

/// Writes the trace with an `element,node` header.
pub fn write_trace<W: Write>(output: W, trace: &[Access]) -> Result<(), PlacementError> {
    let mut writer = csv::Writer::from_writer(output);
    for a in trace {
        writer.serialize(a)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::work_sharing::ChunkSource;
    use proptest::prelude::*;

    fn desc(extent: usize, per_page: usize) -> ArrayDescriptor {
        ArrayDescriptor::new(extent, per_page).unwrap()
    }

    #[test]
    fn block_placement_quarters() {
        let map = place_pages(&desc(100, 1), &Distribution::Block, 4).unwrap();
        let oracle: Vec<usize> = (0..100).map(|k| k / 25).collect();
        assert_eq!(map.as_slice(), &oracle[..]);
        assert_eq!(map.node_of(24), Some(0));
        assert_eq!(map.node_of(75), Some(3));
    }

    #[test]
    fn block_with_uneven_pages() {
        // 10 pages over 4 nodes: ceil(10/4) = 3 pages per node
        let map = place_pages(&desc(10, 1), &Distribution::Block, 4).unwrap();
        assert_eq!(map.as_slice(), &[0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);
    }

    #[test]
    fn cyclic_alternates() {
        let map = place_pages(&desc(8, 1), &Distribution::Cyclic, 2).unwrap();
        assert_eq!(map.as_slice(), &[0, 1, 0, 1, 0, 1, 0, 1]);
        let paged = place_pages(&desc(10, 4), &Distribution::Cyclic, 2).unwrap();
        assert_eq!(paged.as_slice(), &[0, 1, 0]);
    }

    #[test]
    fn first_touch_rules() {
        let trace = vec![
            Access {
                element: 5,
                node: 2,
            },
            Access {
                element: 5,
                node: 1,
            },
            Access {
                element: 1,
                node: 1,
            },
        ];
        let map = place_pages(&desc(8, 1), &Distribution::FirstTouch { trace }, 3).unwrap();
        assert_eq!(map.node_of(5), Some(2));
        assert_eq!(map.node_of(1), Some(1));
        assert_eq!(map.node_of(0), Some(0));
        let bad = Distribution::FirstTouch {
            trace: vec![Access {
                element: 0,
                node: 3,
            }],
        };
        assert!(matches!(
            place_pages(&desc(8, 1), &bad, 3),
            Err(PlacementError::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_shapes() {
        assert!(ArrayDescriptor::new(0, 1).is_err());
        assert!(ArrayDescriptor::new(4, 0).is_err());
        assert!(place_pages(&desc(4, 1), &Distribution::Block, 0).is_err());
        let map = place_pages(&desc(4, 1), &Distribution::Block, 2).unwrap();
        let oob = [Access {
            element: 4,
            node: 0,
        }];
        assert!(matches!(
            locality_cost(&map, &desc(4, 1), &oob),
            Err(PlacementError::ElementOutOfRange {
                element: 4,
                extent: 4
            })
        ));
        assert!(locality_cost(&map, &desc(8, 1), &[]).is_err());
    }

    #[test]
    fn static_trace_follows_blocks() {
        let trace = schedule_access_trace(100, SchedulePolicy::Static { chunk: None }, 4).unwrap();
        assert_eq!(trace.len(), 100);
        assert!(trace.iter().all(|a| a.node == a.element / 25));
        let single = schedule_access_trace(4, SchedulePolicy::Static { chunk: None }, 1).unwrap();
        assert!(single.iter().all(|a| a.node == 0));
        assert!(schedule_access_trace(4, SchedulePolicy::Runtime, 2).is_err());
    }

    #[test]
    fn recorded_log_passes_through() {
        let source = ChunkSource::recording(SchedulePolicy::Dynamic { chunk: 3 }, 10, 2).unwrap();
        for w in [1, 0, 0, 1] {
            source.claim(w).unwrap();
        }
        let log = source.take_log().unwrap();
        let trace = claims_access_trace(&log);
        let expected: Vec<Access> = [
            (0, 1),
            (1, 1),
            (2, 1),
            (3, 0),
            (4, 0),
            (5, 0),
            (6, 0),
            (7, 0),
            (8, 0),
            (9, 1),
        ]
        .iter()
        .map(|&(element, node)| Access { element, node })
        .collect();
        assert_eq!(trace, expected);
    }

    #[test]
    fn dynamic_trace_uses_round_robin_log() {
        let trace = schedule_access_trace(6, SchedulePolicy::Dynamic { chunk: 2 }, 2).unwrap();
        let nodes: Vec<usize> = trace.iter().map(|a| a.node).collect();
        assert_eq!(nodes, vec![0, 0, 1, 1, 0, 0]);
    }

    // Enumeration oracle: count element-by-element whether the owning node
    // of each element's page equals the worker that runs it.
    fn enumerate_locality(
        owner_of_page: impl Fn(usize) -> usize,
        worker_of: impl Fn(usize) -> usize,
        extent: usize,
        per_page: usize,
    ) -> f64 {
        let local = (0..extent)
            .filter(|&e| owner_of_page(e / per_page) == worker_of(e))
            .count();
        local as f64 / extent as f64
    }

    #[test]
    fn aligned_block_is_fully_local() {
        let d = desc(100, 1);
        let map = place_pages(&d, &Distribution::Block, 4).unwrap();
        let trace = schedule_access_trace(100, SchedulePolicy::Static { chunk: None }, 4).unwrap();
        let report = locality_cost(&map, &d, &trace).unwrap();
        assert_eq!(report.locality_fraction(), 1.0);
        assert_eq!(enumerate_locality(|p| p / 25, |e| e / 25, 100, 1), 1.0);
    }

    #[test]
    fn cyclic_against_block_schedule() {
        // 25-element blocks are not a multiple of 4, so each block holds 7
        // elements of its own node's pages
        let d = desc(100, 1);
        let map = place_pages(&d, &Distribution::Cyclic, 4).unwrap();
        let trace = schedule_access_trace(100, SchedulePolicy::Static { chunk: None }, 4).unwrap();
        let oracle = enumerate_locality(|p| p % 4, |e| e / 25, 100, 1);
        assert_eq!(oracle, 0.28);
        assert_eq!(
            locality_cost(&map, &d, &trace).unwrap().locality_fraction(),
            oracle
        );

        let big = desc(10_000, 1);
        let map = place_pages(&big, &Distribution::Cyclic, 4).unwrap();
        let trace =
            schedule_access_trace(10_000, SchedulePolicy::Static { chunk: None }, 4).unwrap();
        let f = locality_cost(&map, &big, &trace)
            .unwrap()
            .locality_fraction();
        assert_eq!(f, enumerate_locality(|p| p % 4, |e| e / 2500, 10_000, 1));
        assert_eq!(f, 0.25);
    }

    #[test]
    fn empty_trace_is_fully_local() {
        let d = desc(4, 1);
        let map = place_pages(&d, &Distribution::Cyclic, 2).unwrap();
        let report = locality_cost(&map, &d, &[]).unwrap();
        assert_eq!(report.total(), 0);
        assert_eq!(report.locality_fraction(), 1.0);
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = vec![
            Access {
                element: 3,
                node: 1,
            },
            Access {
                element: 0,
                node: 0,
            },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "element,node\n3,1\n0,0\n"
        );
        assert_eq!(read_trace(&buf[..]).unwrap(), trace);
        assert_eq!(read_trace("7, 2\n8,0\n".as_bytes()).unwrap().len(), 2);
        assert!(read_trace("7,x\n".as_bytes()).is_err());
    }

    fn distribution() -> impl Strategy<Value = Distribution> {
        prop_oneof![
            Just(Distribution::Block),
            Just(Distribution::Cyclic),
            prop::collection::vec((0usize..200, 0usize..5), 0..50).prop_map(|t| {
                Distribution::FirstTouch {
                    trace: t
                        .into_iter()
                        .map(|(element, node)| Access { element, node })
                        .collect(),
                }
            }),
        ]
    }

    proptest! {
        #[test]
        fn counts_sum_to_trace_length(
            extent in 200usize..400,
            per_page in 1usize..9,
            nodes in 5usize..8,
            dist in distribution(),
            raw in prop::collection::vec((0usize..200, 0usize..5), 0..300),
        ) {
            let d = desc(extent, per_page);
            let map = place_pages(&d, &dist, nodes).unwrap();
            prop_assert!(map.as_slice().iter().all(|&n| n < nodes));
            let trace: Vec<Access> = raw.into_iter().map(|(element, node)| Access { element, node }).collect();
            let r = locality_cost(&map, &d, &trace).unwrap();
            prop_assert_eq!(r.total(), trace.len() as u64);
            let f = r.locality_fraction();
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn aligned_block_static_is_exact(nodes in 1usize..6, per_page in 1usize..6, pages_per_node in 1usize..10) {
            let extent = nodes * per_page * pages_per_node;
            let d = desc(extent, per_page);
            let map = place_pages(&d, &Distribution::Block, nodes).unwrap();
            let trace = schedule_access_trace(extent, SchedulePolicy::Static { chunk: None }, nodes).unwrap();
            prop_assert_eq!(locality_cost(&map, &d, &trace).unwrap().locality_fraction(), 1.0);
        }

        #[test]
        fn first_touch_scores_own_trace(
            nodes in 1usize..6,
            per_page in 1usize..5,
            owners in prop::collection::vec(0usize..6, 1..40),
        ) {
            // every page touched by exactly one node
            let owners: Vec<usize> = owners.into_iter().map(|o| o % nodes).collect();
            let d = desc(owners.len() * per_page, per_page);
            let trace: Vec<Access> = (0..d.extent())
                .map(|element| Access { element, node: owners[element / per_page] })
                .collect();
            let map = place_pages(&d, &Distribution::FirstTouch { trace: trace.clone() }, nodes).unwrap();
            prop_assert_eq!(locality_cost(&map, &d, &trace).unwrap().locality_fraction(), 1.0);
        }
    }
}
