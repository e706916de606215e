use super::ExecError;

/// One lane's slice of the vector register file.
///
/// Writes are confined to a single register. Reads address a register
/// group: byte `off` of group `reg` may run into `reg + 1, reg + 2, ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vrf {
    reg_bytes: usize,
    data: Vec<u8>,
}

impl Vrf {
    pub fn new(num_regs: usize, reg_bytes: usize) -> Self {
        Vrf {
            reg_bytes,
            data: vec![0; num_regs * reg_bytes],
        }
    }

    pub fn reg_bytes(&self) -> usize {
        self.reg_bytes
    }

    pub fn num_regs(&self) -> usize {
        self.data.len() / self.reg_bytes
    }

    pub fn capacity_bits(&self) -> usize {
        self.data.len() * 8
    }

    pub fn reg(&self, r: usize) -> &[u8] {
        &self.data[r * self.reg_bytes..(r + 1) * self.reg_bytes]
    }

    pub fn write(&mut self, reg: usize, offset: usize, bytes: &[u8]) -> Result<(), ExecError> {
        if reg >= self.num_regs() || offset + bytes.len() > self.reg_bytes {
            return Err(ExecError::RegisterOverflow {
                reg,
                bytes: offset + bytes.len(),
                capacity: self.reg_bytes,
            });
        }
        let base = reg * self.reg_bytes + offset;
        self.data[base..base + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    pub fn read_group(&self, reg: usize, offset: usize, len: usize) -> Result<&[u8], ExecError> {
        let start = reg * self.reg_bytes + offset;
        if reg >= self.num_regs() || start + len > self.data.len() {
            return Err(ExecError::VrfRange { reg, offset, len });
        }
        Ok(&self.data[start..start + len])
    }

    /// Writes one 32-bit word of a register group (word-aligned, so it
    /// never straddles two registers).
    pub fn write_group_word(&mut self, reg: usize, word: usize, value: i32) -> Result<(), ExecError> {
        let byte = word * 4;
        let r = reg + byte / self.reg_bytes;
        self.write(r, byte % self.reg_bytes, &value.to_le_bytes())
            .map_err(|_| ExecError::VrfRange {
                reg,
                offset: byte,
                len: 4,
            })
    }

    pub fn read_group_word(&self, reg: usize, word: usize) -> Result<i32, ExecError> {
        let b = self.read_group(reg, word * 4, 4)?;
        Ok(i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
