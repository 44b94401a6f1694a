use super::truncated;
use crate::data::TaskData;
use crate::error::{invalid, Result};
use crate::model::{task_loss_batch, ModelSpec, ParamState};
use crate::rng::RngState;
use crate::tensor::{axpy, cosine};

/// Draws one step's worth of shared-parameter task gradients.
pub trait GradientSource {
    fn num_tasks(&self) -> usize;
    fn sample(&self, rng: &mut RngState) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityOutput {
    /// `None` when every sample was skipped.
    pub mean: Option<f64>,
    pub used: usize,
    /// Samples with a zero-norm gradient.
    pub skipped: usize,
}

/// Mean cosine between task `target`'s gradient and `Σ_k w_k g_k` over `num_batches` draws.
pub fn gradient_similarity_of(
    source: &impl GradientSource,
    target: usize,
    weights: &[f64],
    num_batches: usize,
    rng: &mut RngState,
) -> Result<SimilarityOutput> {
    let k = source.num_tasks();
    if target >= k || weights.len() != k {
        return Err(invalid(format!("similarity target {target} with {k} tasks and {} weights", weights.len())));
    }
    let mut sum = 0.0;
    let mut out = SimilarityOutput { mean: None, used: 0, skipped: 0 };
    for _ in 0..num_batches {
        let gs = source.sample(rng)?;
        let mut mt = vec![0.0; gs[target].len()];
        for (g, &w) in gs.iter().zip(weights) {
            axpy(w, g, &mut mt);
        }
        match cosine(&gs[target], &mt) {
            Some(c) => {
                sum += c;
                out.used += 1;
            }
            None => out.skipped += 1,
        }
    }
    if out.used > 0 {
        out.mean = Some((sum / out.used as f64).clamp(-1.0, 1.0));
    }
    Ok(out)
}

/// Task gradients of the model on freshly drawn training batches.
#[derive(Debug, Clone)]
pub struct ModelGradientSource<'a> {
    pub params: &'a ParamState,
    pub spec: &'a ModelSpec,
    pub tasks: Vec<&'a TaskData>,
    pub batch_size: usize,
    /// Reuse the first task's indices for every task (equal-size tasks only).
    pub shared_batches: bool,
}

impl GradientSource for ModelGradientSource<'_> {
    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn sample(&self, rng: &mut RngState) -> Result<Vec<Vec<f64>>> {
        let first = truncated(self.tasks[0].len(), self.batch_size, rng);
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let batch = if i == 0 || self.shared_batches {
                    if t.len() != self.tasks[0].len() {
                        return Err(invalid("shared batches need tasks of equal size"));
                    }
                    first.clone()
                } else {
                    truncated(t.len(), self.batch_size, rng)
                };
                Ok(task_loss_batch(self.params, self.spec, t, &batch)?.gradient()?.shared_flat())
            })
            .collect()
    }
}

/// Similarity of `target`'s shared gradient to the uniform multi-task
/// gradient (unit weights) over `num_batches` training batches.
pub fn gradient_similarity(
    params: &ParamState,
    spec: &ModelSpec,
    target: &TaskData,
    tasks: &[&TaskData],
    batch_size: usize,
    num_batches: usize,
    rng: &mut RngState,
) -> Result<SimilarityOutput> {
    let idx = tasks
        .iter()
        .position(|t| t.task_id() == target.task_id())
        .ok_or_else(|| invalid(format!("target `{}` is not among the tasks", target.task_id())))?;
    let source = ModelGradientSource { params, spec, tasks: tasks.to_vec(), batch_size, shared_batches: false };
    gradient_similarity_of(&source, idx, &vec![1.0; tasks.len()], num_batches, rng)
}

#[cfg(test)]
mod tests {
    use super::super::objective::fixtures::*;
    use super::*;
    use crate::layers::Activation;
    use proptest::prelude::*;

    struct Fixed(Vec<Vec<f64>>);

    impl GradientSource for Fixed {
        fn num_tasks(&self) -> usize {
            self.0.len()
        }
        fn sample(&self, _: &mut RngState) -> Result<Vec<Vec<f64>>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn orthogonal_unit_gradients() {
        let src = Fixed(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let out = gradient_similarity_of(&src, 0, &[1.0, 1.0], 200, &mut RngState::new(0)).unwrap();
        assert!((out.mean.unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(out.used, 200);
    }

    #[test]
    fn zero_gradients_are_skipped() {
        let src = Fixed(vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
        let out = gradient_similarity_of(&src, 0, &[1.0, 1.0], 5, &mut RngState::new(0)).unwrap();
        assert_eq!((out.mean, out.used, out.skipped), (None, 0, 5));
    }

    #[test]
    fn single_task_is_exactly_one() {
        let t = toy_task(100, 4, 3, 1);
        let (spec, p) = toy_model(&t, &[8], 2);
        let out = gradient_similarity(&p, &spec, &t, &[&t], 16, 50, &mut RngState::new(3)).unwrap();
        assert_eq!(out.mean, Some(1.0));
    }

    #[test]
    fn copies_of_the_target_give_one() {
        let t = toy_task(60, 4, 3, 5);
        let copies: Vec<TaskData> = (0..3).map(|i| t.clone().with_id(format!("c{i}"))).collect();
        let refs: Vec<&TaskData> = copies.iter().collect();
        let spec = ModelSpec::for_tasks(&[6], Activation::Tanh, &refs).unwrap();
        let mut p = spec.init(&mut RngState::new(6)).unwrap();
        let head = p.heads[0].blocks.clone();
        for h in &mut p.heads {
            h.blocks = head.clone();
        }
        let src = ModelGradientSource { params: &p, spec: &spec, tasks: refs.clone(), batch_size: 8, shared_batches: true };
        let out = gradient_similarity_of(&src, 1, &[1.0; 3], 30, &mut RngState::new(7)).unwrap();
        assert!((out.mean.unwrap() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn in_unit_interval(flat in prop::collection::vec(-5.0f64..5.0, 9)) {
            let src = Fixed(flat.chunks(3).map(|c| c.to_vec()).collect());
            let out = gradient_similarity_of(&src, 2, &[1.0, 2.0, 0.5], 1, &mut RngState::new(0)).unwrap();
            if let Some(m) = out.mean {
                prop_assert!((-1.0..=1.0).contains(&m));
            }
        }
    }
}
