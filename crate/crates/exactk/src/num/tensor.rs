use super::scalar::Scalar;

/// Dense row-major tensor. Rank 0 is represented as shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> TensorData<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor shape has zero extent: {shape:?}"
        );
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {shape:?} does not match data length {}",
            data.len()
        );
        TensorData { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        TensorData::new(shape.to_vec(), vec![T::zero(); numel])
    }

    pub fn scalar(v: T) -> Self {
        TensorData::new(vec![1], vec![v])
    }

    pub fn vector(data: Vec<T>) -> Self {
        TensorData::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Self {
        TensorData::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> T {
        assert!(self.is_scalar(), "item() on non-scalar shape {:?}", self.shape);
        self.data[0]
    }

    /// (rows, cols) view: 1-d tensors count as a single row.
    pub fn as_2d(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("as_2d on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn row_slice(&self, row: usize) -> &[T] {
        let (rows, cols) = self.as_2d();
        assert!(row < rows, "row {row} out of range for {rows} rows");
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &TensorData<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        TensorData::new(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }
}
