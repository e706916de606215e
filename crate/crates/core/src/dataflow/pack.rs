use crate::isa::Precision;
use crate::sau::{PackedElement, SauError};
use crate::workloads::Tensor;

/// Unified elements of a CHW tensor, `[group][y][x]`. Group `g` holds
/// channels `g * ic_par .. (g + 1) * ic_par`; missing channels are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedGrid {
    pub precision: Precision,
    pub groups: usize,
    pub h: usize,
    pub w: usize,
    pub elems: Vec<PackedElement>,
}

impl PackedGrid {
    #[inline]
    pub fn get(&self, g: usize, y: usize, x: usize) -> &PackedElement {
        &self.elems[(g * self.h + y) * self.w + x]
    }

    /// Element at a possibly padded position; outside reads as zero.
    #[inline]
    pub fn get_padded(&self, g: usize, y: isize, x: isize) -> PackedElement {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            PackedElement::zero(self.precision)
        } else {
            *self.get(g, y as usize, x as usize)
        }
    }
}

pub fn pack_tensor(t: &Tensor, precision: Precision) -> Result<PackedGrid, SauError> {
    let par = precision.ic_par();
    let groups = t.c.div_ceil(par);
    let mut elems = Vec::with_capacity(groups * t.h * t.w);
    let mut ops = vec![0i32; par];
    for g in 0..groups {
        for y in 0..t.h {
            for x in 0..t.w {
                for (i, o) in ops.iter_mut().enumerate() {
                    let c = g * par + i;
                    *o = if c < t.c { t.get(c, y, x) as i32 } else { 0 };
                }
                elems.push(PackedElement::new(precision, &ops)?);
            }
        }
    }
    Ok(PackedGrid {
        precision,
        groups,
        h: t.h,
        w: t.w,
        elems,
    })
}

/// Inverse of [`pack_tensor`], keeping the first `channels` channels.
pub fn unpack(grid: &PackedGrid, channels: usize) -> Tensor {
    let par = grid.precision.ic_par();
    let mut t = Tensor::zeros(channels, grid.h, grid.w, grid.precision);
    for c in 0..channels.min(grid.groups * par) {
        for y in 0..grid.h {
            for x in 0..grid.w {
                t.set(c, y, x, grid.get(c / par, y, x).operands()[c % par]);
            }
        }
    }
    t
}
