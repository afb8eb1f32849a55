use crate::model::{ConvSpec, PoolSpec};

/// Input position read by each (output position, packed filter entry) pair.
///
/// A packed filter entry `i = β·H_f·W_f + r_y·W_f + r_x` is read at input pixel
/// `(r_y + s_y·a_y, r_x + s_x·a_x)` of channel `β` when producing output
/// position `a = (a_y, a_x)`.
#[derive(Clone, Debug)]
pub struct ConvIndexMap {
    spec: ConvSpec,
    table: Vec<usize>,
}

impl ConvIndexMap {
    pub fn new(spec: &ConvSpec) -> Self {
        let (ho, wo) = (spec.out_height(), spec.out_width());
        let plane = spec.in_height * spec.in_width;
        let mut table = Vec::with_capacity(ho * wo * spec.packed_len());
        for ay in 0..ho {
            for ax in 0..wo {
                for beta in 0..spec.channels_in {
                    for ry in 0..spec.filter_height {
                        for rx in 0..spec.filter_width {
                            let y = ry + spec.stride_y * ay;
                            let x = rx + spec.stride_x * ax;
                            table.push(beta * plane + y * spec.in_width + x);
                        }
                    }
                }
            }
        }
        Self { spec: *spec, table }
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    /// Number of output positions per channel, `H_out·W_out`.
    pub fn positions(&self) -> usize {
        self.spec.out_height() * self.spec.out_width()
    }

    /// Flat input index `ν_a(i)`.
    #[inline]
    pub fn nu(&self, position: usize, packed: usize) -> usize {
        self.table[position * self.spec.packed_len() + packed]
    }

    /// All input indices read at output position `a`, in packed order.
    #[inline]
    pub fn patch(&self, position: usize) -> &[usize] {
        let k = self.spec.packed_len();
        &self.table[position * k..(position + 1) * k]
    }

    pub fn packed_index(&self, channel: usize, ry: usize, rx: usize) -> usize {
        channel * self.spec.filter_len() + ry * self.spec.filter_width + rx
    }

    pub fn unpack_index(&self, packed: usize) -> (usize, usize, usize) {
        let fl = self.spec.filter_len();
        let rem = packed % fl;
        (packed / fl, rem / self.spec.filter_width, rem % self.spec.filter_width)
    }

    /// Flat output index of channel `alpha` at position `a`.
    #[inline]
    pub fn out_index(&self, alpha: usize, position: usize) -> usize {
        alpha * self.positions() + position
    }
}

/// Average pooling over non-overlapping windows.
#[derive(Clone, Debug)]
pub struct PoolMap {
    spec: PoolSpec,
    preimages: Vec<usize>,
    owner: Vec<Option<usize>>,
    discarded: Vec<usize>,
}

impl PoolMap {
    pub fn new(spec: &PoolSpec) -> Self {
        let (ho, wo) = (spec.out_height(), spec.out_width());
        let plane = spec.in_height * spec.in_width;
        let mut preimages = Vec::with_capacity(spec.out_len() * spec.window_len());
        let mut owner = vec![None; spec.in_len()];
        for c in 0..spec.channels {
            for oy in 0..ho {
                for ox in 0..wo {
                    let out = c * ho * wo + oy * wo + ox;
                    for dy in 0..spec.window_height {
                        for dx in 0..spec.window_width {
                            let y = oy * spec.window_height + dy;
                            let x = ox * spec.window_width + dx;
                            let b = c * plane + y * spec.in_width + x;
                            preimages.push(b);
                            owner[b] = Some(out);
                        }
                    }
                }
            }
        }
        let discarded = (0..spec.in_len()).filter(|&b| owner[b].is_none()).collect();
        Self {
            spec: *spec,
            preimages,
            owner,
            discarded,
        }
    }

    pub fn spec(&self) -> &PoolSpec {
        &self.spec
    }

    /// `k = |P⁻¹(a)|`.
    pub fn window(&self) -> usize {
        self.spec.window_len()
    }

    #[inline]
    pub fn preimage(&self, out: usize) -> &[usize] {
        let k = self.window();
        &self.preimages[out * k..(out + 1) * k]
    }

    /// Output pixel that averages input pixel `b`, if any.
    pub fn owner(&self, b: usize) -> Option<usize> {
        self.owner[b]
    }

    pub fn discarded(&self) -> &[usize] {
        &self.discarded
    }
}
