use crate::error::{invalid, Error, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxCrossEntropy,
    SquaredError,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Real { values: Vec<f64>, dim: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Real { values, dim } => values.len() / (*dim).max(1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Output width a head needs for these targets.
    pub fn output_dim(&self) -> usize {
        match self {
            Targets::Classes { num_classes, .. } => *num_classes,
            Targets::Real { dim, .. } => *dim,
        }
    }

    fn gather(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Real { values, dim } => Targets::Real {
                values: idx
                    .iter()
                    .flat_map(|&i| values[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
                dim: *dim,
            },
        }
    }
}

/// Targets of one gathered batch.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchTargets {
    Classes(Vec<usize>),
    Real(Vec<f64>),
}

/// One task: its examples, targets, loss kind and task weight `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    task_id: String,
    inputs: DenseTensor,
    targets: Targets,
    weight: f64,
}

impl TaskData {
    pub fn new(task_id: impl Into<String>, inputs: DenseTensor, targets: Targets) -> Result<Self> {
        let (n, _) = inputs.dims2();
        if inputs.shape().len() != 2 {
            return Err(Error::Shape {
                context: "TaskData inputs",
                expected: "[N, input_dim]".into(),
                actual: format!("{:?}", inputs.shape()),
            });
        }
        if targets.len() != n {
            return Err(Error::Shape {
                context: "TaskData targets",
                expected: format!("{n} targets"),
                actual: format!("{}", targets.len()),
            });
        }
        if let Targets::Classes { labels, num_classes } = &targets {
            if let Some(bad) = labels.iter().find(|&&y| y >= *num_classes) {
                return Err(invalid(format!("class id {bad} outside 0..{num_classes}")));
            }
        }
        Ok(Self {
            task_id: task_id.into(),
            inputs,
            targets,
            weight: 1.0,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(invalid(format!("task weight must be positive, got {weight}")));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn with_id(mut self, task_id: impl Into<String>) -> Self {
        self.task_id = task_id.into();
        self
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.inputs.dims2().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.dims2().1
    }

    pub fn inputs(&self) -> &DenseTensor {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.targets {
            Targets::Classes { .. } => LossKind::SoftmaxCrossEntropy,
            Targets::Real { .. } => LossKind::SquaredError,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Real { .. } => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { num_classes, .. } => Some(*num_classes),
            Targets::Real { .. } => None,
        }
    }

    /// New task holding rows `idx` in that order.
    pub fn subset(&self, idx: &[usize], task_id: impl Into<String>) -> TaskData {
        let d = self.input_dim();
        let rows: Vec<f64> = idx
            .iter()
            .flat_map(|&i| self.inputs.data()[i * d..(i + 1) * d].iter().copied())
            .collect();
        TaskData {
            task_id: task_id.into(),
            inputs: DenseTensor::matrix(idx.len(), d, rows).expect("shape"),
            targets: self.targets.gather(idx),
            weight: self.weight,
        }
    }

    /// Rows `idx` as a `|idx| × input_dim` matrix plus their targets.
    pub fn gather(&self, idx: &[usize]) -> (DenseTensor, BatchTargets) {
        let d = self.input_dim();
        let mut rows = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            rows.extend_from_slice(&self.inputs.data()[i * d..(i + 1) * d]);
        }
        let x = DenseTensor::matrix(idx.len(), d, rows).expect("shape");
        let t = match self.targets.gather(idx) {
            Targets::Classes { labels, .. } => BatchTargets::Classes(labels),
            Targets::Real { values, .. } => BatchTargets::Real(values),
        };
        (x, t)
    }

    pub(crate) fn replace_labels(&self, labels: Vec<usize>, num_classes: usize) -> TaskData {
        TaskData {
            task_id: self.task_id.clone(),
            inputs: self.inputs.clone(),
            targets: Targets::Classes { labels, num_classes },
            weight: self.weight,
        }
    }
}

/// Train / validation / test pools of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplits {
    pub train: TaskData,
    pub val: TaskData,
    pub test: TaskData,
}

impl TaskSplits {
    pub fn task_id(&self) -> &str {
        self.train.task_id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_count_mismatch_and_bad_class() {
        let x = DenseTensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
        let t = Targets::Classes { labels: vec![0], num_classes: 2 };
        assert!(TaskData::new("a", x.clone(), t).is_err());
        let t = Targets::Classes { labels: vec![0, 2], num_classes: 2 };
        assert!(TaskData::new("a", x.clone(), t).is_err());
        let ok = TaskData::new("a", x, Targets::Classes { labels: vec![0, 1], num_classes: 2 });
        assert!(ok.unwrap().with_weight(0.0).is_err());
    }

    #[test]
    fn gather_rows_and_targets() {
        let x = DenseTensor::matrix(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let t = Targets::Real { values: vec![10.0, 11.0, 12.0], dim: 1 };
        let task = TaskData::new("r", x, t).unwrap();
        let (b, y) = task.gather(&[2, 0]);
        assert_eq!(b.data(), &[4.0, 5.0, 0.0, 1.0]);
        assert_eq!(y, BatchTargets::Real(vec![12.0, 10.0]));
        assert_eq!(task.loss_kind(), LossKind::SquaredError);
    }
}
