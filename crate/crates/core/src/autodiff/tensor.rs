use std::fmt;
use std::sync::Arc;

/// Identifies the tape a tensor was recorded on, so that mixing tensors from
/// different tapes is caught instead of silently producing wrong gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef {
    pub(crate) tape_id: u64,
    pub(crate) node: usize,
}

/// Dense multi-dimensional array of f64, row-major.
///
/// A tensor is either a constant (`node == None`) or the output of an
/// operation recorded on a tape. Cloning is cheap: the data buffer is shared.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    pub(crate) node: Option<NodeRef>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data: Arc::new(data), node: None }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_vec(vec![], vec![value])
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; len])
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, vec![value; len])
    }

    pub(crate) fn with_node(shape: Vec<usize>, data: Vec<f64>, node: Option<NodeRef>) -> Tensor {
        let mut t = Tensor::from_vec(shape, data);
        t.node = node;
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Number of live handles sharing this tensor's buffer; lets tests
    /// observe that dropping a tape released the node storage.
    pub fn buffer_refs(&self) -> usize {
        Arc::strong_count(&self.data)
    }

    /// Value of a scalar (rank-0 or single-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// True if the tensor is recorded on a tape (participates in gradients).
    pub fn is_recorded(&self) -> bool {
        self.node.is_some()
    }

    /// A constant copy: same data, detached from any tape.
    pub fn detached(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: Arc::clone(&self.data), node: None }
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("node", &self.node)
            .field("data", &self.data)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_roundtrip() {
        let t = Tensor::scalar(3.5);
        assert_eq!(t.shape(), &[] as &[usize]);
        assert_eq!(t.item(), 3.5);
    }

    #[test]
    #[should_panic]
    fn shape_data_mismatch_panics() {
        let _ = Tensor::from_vec(vec![2, 3], vec![0.0; 5]);
    }

    #[test]
    fn buffer_refs_counts_shares() {
        let t = Tensor::zeros(vec![10]);
        assert_eq!(t.buffer_refs(), 1);
        let u = t.clone();
        assert_eq!(t.buffer_refs(), 2);
        drop(u);
        assert_eq!(t.buffer_refs(), 1);
    }
}
