//! Materialize the declared tasks from the data pool.

use crate::data::{corrupt_labels, load_idx, permute_labels, restrict_classes, split_task, TaskData, TaskSplits};
use crate::error::{invalid, Result};
use crate::harness::config::{DataConfig, DataSource, TaskRecipe};
use crate::rng::RngState;

/// The raw pool: `parts × (train + val + test)` samples.
pub fn load_pool(data: &DataConfig) -> Result<TaskData> {
    let need = data.parts * (data.train + data.val + data.test);
    let pool = match &data.source {
        DataSource::Synthetic(gen) => gen.generate(need, data.seed, "pool")?,
        DataSource::Idx { images, labels } => load_idx(images, labels, "pool")?,
    };
    if pool.len() < need {
        return Err(invalid(format!("data pool has {} samples but the split needs {need}", pool.len())));
    }
    Ok(pool)
}

/// Cut the pool into disjoint parts, each split into train/val/test.
/// The cut depends only on `data`, so every task reading part `p` sees the same inputs.
pub fn split_parts(pool: &TaskData, data: &DataConfig) -> Result<Vec<TaskSplits>> {
    let rng = RngState::new(data.seed);
    let per = data.train + data.val + data.test;
    let parts = split_task(pool, &vec![per; data.parts], &mut rng.fork_named("parts"))?;
    parts
        .iter()
        .enumerate()
        .map(|(p, part)| {
            let s = split_task(part, &[data.train, data.val, data.test], &mut rng.fork_named(&format!("splits/{p}")))?;
            let mut it = s.into_iter();
            let (train, val, test) = (it.next().expect("3"), it.next().expect("3"), it.next().expect("3"));
            Ok(TaskSplits { train, val, test })
        })
        .collect()
}

fn transform(d: &TaskData, r: &TaskRecipe, split: &str, rng: &RngState) -> Result<TaskData> {
    let mut t = match &r.classes {
        Some(cs) => restrict_classes(d, cs, &r.id)?,
        None => d.clone().with_id(&r.id),
    };
    if let Some(f) = r.corrupt {
        t = corrupt_labels(&t, f, &mut rng.fork_named(&format!("corrupt/{}/{split}", r.id)))?;
    }
    if r.permute {
        t = permute_labels(&t, &mut rng.fork_named(&format!("permute/{}/{split}", r.id)))?;
    }
    Ok(t)
}

pub fn build_task(parts: &[TaskSplits], recipe: &TaskRecipe, data_seed: u64) -> Result<TaskSplits> {
    let src = parts
        .get(recipe.part)
        .ok_or_else(|| invalid(format!("task `{}` uses missing part {}", recipe.id, recipe.part)))?;
    let rng = RngState::new(data_seed);
    Ok(TaskSplits {
        train: transform(&src.train, recipe, "train", &rng)?,
        val: transform(&src.val, recipe, "val", &rng)?,
        test: transform(&src.test, recipe, "test", &rng)?,
    })
}

/// Every recipe, materialized in declaration order.
pub fn build_tasks(data: &DataConfig, recipes: &[TaskRecipe]) -> Result<Vec<TaskSplits>> {
    let pool = load_pool(data)?;
    let parts = split_parts(&pool, data)?;
    recipes.iter().map(|r| build_task(&parts, r, data.seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticImages;

    fn small() -> DataConfig {
        DataConfig {
            source: DataSource::Synthetic(SyntheticImages { side: 4, ..Default::default() }),
            seed: 5,
            parts: 2,
            train: 30,
            val: 10,
            test: 10,
        }
    }

    #[test]
    fn shared_part_keeps_inputs_and_permutes_labels() {
        let recipes = [
            TaskRecipe::parse("clean", "part=1").unwrap(),
            TaskRecipe::parse("noisy", "part=1 permute").unwrap(),
            TaskRecipe::parse("other", "part=0").unwrap(),
        ];
        let t = build_tasks(&small(), &recipes).unwrap();
        assert_eq!(t[0].train.inputs(), t[1].train.inputs());
        assert_ne!(t[0].train.labels(), t[1].train.labels());
        let mut a = t[0].train.labels().unwrap().to_vec();
        let mut b = t[1].train.labels().unwrap().to_vec();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert_ne!(t[0].train.inputs(), t[2].train.inputs());
        assert_eq!((t[2].train.len(), t[2].val.len(), t[2].test.len()), (30, 10, 10));
        assert_eq!(t[1].test.task_id(), "noisy");
        assert_eq!(t, build_tasks(&small(), &recipes).unwrap());
    }

    #[test]
    fn too_small_pool_rejected() {
        let mut d = small();
        d.source = DataSource::Idx { images: "/nonexistent".into(), labels: "/nonexistent".into() };
        assert!(load_pool(&d).is_err());
    }
}
