use super::ExecError;

/// Flat byte-addressable external memory. Out-of-range accesses trap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExternalMemory {
    bytes: Vec<u8>,
}

impl ExternalMemory {
    pub fn new(size: usize) -> Self {
        ExternalMemory { bytes: vec![0; size] }
    }

    /// Memory sized to hold `image` at `base`.
    pub fn from_image(base: u64, image: &[u8]) -> Self {
        let mut m = ExternalMemory::new(base as usize + image.len());
        m.bytes[base as usize..].copy_from_slice(image);
        m
    }

    /// Raw binary image file placed at `base`.
    pub fn from_file(base: u64, path: &std::path::Path) -> std::io::Result<Self> {
        Ok(ExternalMemory::from_image(base, &std::fs::read(path)?))
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn range(&self, addr: u64, len: usize) -> Result<std::ops::Range<usize>, ExecError> {
        let start = usize::try_from(addr).map_err(|_| ExecError::OutOfBounds { addr, len })?;
        match start.checked_add(len) {
            Some(end) if end <= self.bytes.len() => Ok(start..end),
            _ => Err(ExecError::OutOfBounds { addr, len }),
        }
    }

    pub fn read(&self, addr: u64, len: usize) -> Result<&[u8], ExecError> {
        let r = self.range(addr, len)?;
        Ok(&self.bytes[r])
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), ExecError> {
        let r = self.range(addr, data.len())?;
        self.bytes[r].copy_from_slice(data);
        Ok(())
    }

    /// Copies a raw binary image to `base`; the image must fit.
    pub fn load_image(&mut self, base: u64, image: &[u8]) -> Result<(), ExecError> {
        self.write(base, image)
    }
}
