//! The spatio-temporal volume: a `T x H x W` grid of D-dimensional input
//! vectors, one per time slice and cell. One volume is one sample.

/// Dense `T x H x W x D` container of f64 values.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatioTemporalVolume {
    t_len: usize,
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f64>,
}

impl SpatioTemporalVolume {
    pub fn zeros(t_len: usize, height: usize, width: usize, depth: usize) -> Self {
        SpatioTemporalVolume {
            t_len,
            height,
            width,
            depth,
            data: vec![0.0; t_len * height * width * depth],
        }
    }

    pub fn from_vec(
        t_len: usize,
        height: usize,
        width: usize,
        depth: usize,
        data: Vec<f64>,
    ) -> Self {
        assert_eq!(
            data.len(),
            t_len * height * width * depth,
            "volume data length {} does not match {}x{}x{}x{}",
            data.len(),
            t_len,
            height,
            width,
            depth
        );
        SpatioTemporalVolume {
            t_len,
            height,
            width,
            depth,
            data,
        }
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, t: usize, i: usize, j: usize) -> usize {
        debug_assert!(t < self.t_len && i < self.height && j < self.width);
        ((t * self.height + i) * self.width + j) * self.depth
    }

    /// The D-dimensional input vector at slice `t`, cell `(i, j)`.
    #[inline]
    pub fn input(&self, t: usize, i: usize, j: usize) -> &[f64] {
        let o = self.offset(t, i, j);
        &self.data[o..o + self.depth]
    }

    #[inline]
    pub fn input_mut(&mut self, t: usize, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(t, i, j);
        &mut self.data[o..o + self.depth]
    }

    /// Fixes the slice count to `t_len`: longer volumes are truncated,
    /// shorter ones padded with all-zero slices. Used when preparing
    /// variable-length sequences (video-style data) for a model with a
    /// fixed temporal length.
    pub fn pad_to_length(&self, t_len: usize) -> SpatioTemporalVolume {
        let mut out = SpatioTemporalVolume::zeros(t_len, self.height, self.width, self.depth);
        let keep = self.t_len.min(t_len) * self.height * self.width * self.depth;
        out.data[..keep].copy_from_slice(&self.data[..keep]);
        out
    }
}

/// A labeled set of volumes sharing one grid shape and sequence length.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub volumes: Vec<SpatioTemporalVolume>,
    /// 0-based class indices, one per volume.
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(volumes: Vec<SpatioTemporalVolume>, labels: Vec<usize>) -> Self {
        assert_eq!(
            volumes.len(),
            labels.len(),
            "dataset has {} volumes but {} labels",
            volumes.len(),
            labels.len()
        );
        Dataset { volumes, labels }
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }
}
