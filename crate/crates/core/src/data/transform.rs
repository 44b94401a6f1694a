//! Multi-task constructions over a parent dataset.

use std::collections::BTreeSet;

use crate::data::task::TaskData;
use crate::error::{invalid, Result};
use crate::rng::RngState;

/// Disjoint seeded subsets of `data` with the given sizes. Output `i` is
/// named `<task_id>/<i>`.
pub fn split_task(data: &TaskData, sizes: &[usize], rng: &mut RngState) -> Result<Vec<TaskData>> {
    let total: usize = sizes.iter().sum();
    if total > data.len() {
        return Err(invalid(format!(
            "split sizes sum to {total} but `{}` has only {} samples",
            data.task_id(),
            data.len()
        )));
    }
    let perm = rng.permutation(data.len());
    let mut offset = 0;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let part = data.subset(&perm[offset..offset + s], format!("{}/{i}", data.task_id()));
            offset += s;
            part
        })
        .collect())
}

/// Shuffle the label vector across examples: the label multiset is kept,
/// the input/label association is destroyed.
pub fn permute_labels(data: &TaskData, rng: &mut RngState) -> Result<TaskData> {
    let (Some(labels), Some(k)) = (data.labels(), data.num_classes()) else {
        return Err(invalid(format!("`{}` is a regression task; labels cannot be permuted", data.task_id())));
    };
    let mut labels = labels.to_vec();
    rng.shuffle(&mut labels);
    Ok(data.replace_labels(labels, k))
}

/// Replace a `fraction` of labels, chosen at random, by uniformly drawn classes.
pub fn corrupt_labels(data: &TaskData, fraction: f64, rng: &mut RngState) -> Result<TaskData> {
    let (Some(labels), Some(k)) = (data.labels(), data.num_classes()) else {
        return Err(invalid("label corruption needs a classification task"));
    };
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid(format!("corruption fraction {fraction} outside [0, 1]")));
    }
    let mut labels = labels.to_vec();
    let count = (fraction * labels.len() as f64).round() as usize;
    for &i in &rng.permutation(labels.len())[..count] {
        labels[i] = rng.below(k);
    }
    Ok(data.replace_labels(labels, k))
}

/// Keep only examples whose class is in `classes`, relabelled `0..classes.len()`
/// in the order given.
pub fn restrict_classes(data: &TaskData, classes: &[usize], task_id: &str) -> Result<TaskData> {
    let Some(labels) = data.labels() else {
        return Err(invalid("class restriction needs a classification task"));
    };
    if classes.is_empty() {
        return Err(invalid("class subset is empty"));
    }
    let keep: Vec<usize> = (0..data.len()).filter(|&i| classes.contains(&labels[i])).collect();
    let sub = data.subset(&keep, task_id);
    let relabeled = sub
        .labels()
        .expect("classification")
        .iter()
        .map(|y| classes.iter().position(|c| c == y).expect("kept"))
        .collect();
    Ok(sub.replace_labels(relabeled, classes.len()))
}

/// A sampled auxiliary set: indices into the pool, ascending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AuxiliarySet {
    pub members: Vec<usize>,
}

impl AuxiliarySet {
    /// `[target, pool[m] for m in members]`.
    pub fn materialize(&self, pool: &[TaskData], target: &TaskData) -> Vec<TaskData> {
        std::iter::once(target.clone())
            .chain(self.members.iter().map(|&m| pool[m].clone()))
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// `count` distinct size-`set_size` subsets of `pool`, each meant to be
/// trained together with `target`.
pub fn sample_auxiliary_sets(
    pool: &[TaskData],
    target: &TaskData,
    set_size: usize,
    count: usize,
    rng: &mut RngState,
) -> Result<Vec<AuxiliarySet>> {
    if set_size > pool.len() {
        return Err(invalid(format!("set size {set_size} exceeds pool of {}", pool.len())));
    }
    if pool.iter().any(|t| t.task_id() == target.task_id()) {
        return Err(invalid(format!("target `{}` is also in the auxiliary pool", target.task_id())));
    }
    let available = binomial(pool.len(), set_size);
    if (count as u128) > available {
        return Err(invalid(format!(
            "{count} distinct sets requested but only {available} subsets of size {set_size} exist"
        )));
    }
    if available <= 4096 {
        let mut all = combinations(pool.len(), set_size);
        rng.shuffle(&mut all);
        return Ok(all.into_iter().take(count).map(|members| AuxiliarySet { members }).collect());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut members = rng.permutation(pool.len())[..set_size].to_vec();
        members.sort_unstable();
        if seen.insert(members.clone()) {
            out.push(AuxiliarySet { members });
        }
    }
    Ok(out)
}
