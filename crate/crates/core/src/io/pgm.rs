//! Binary PGM (P5) images carrying class ids as single bytes.

use super::IoError;
use std::io::Write;
use std::path::Path;

pub fn write_pgm(path: &Path, width: u32, height: u32, data: &[u8]) -> Result<(), IoError> {
    debug_assert_eq!(data.len(), (width * height) as usize);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(path, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    file.write_all(format!("P5\n{width} {height}\n255\n").as_bytes())
        .and_then(|_| file.write_all(data))
        .map_err(|e| IoError::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<(u32, u32, Vec<u8>), IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(IoError::parse(path, "not a binary PGM (P5) file"));
    }

    // Header: three whitespace-separated tokens after the magic, with
    // optional `#` comment lines, then a single whitespace byte before data.
    let mut pos = 2usize;
    let mut tokens = Vec::with_capacity(3);
    while tokens.len() < 3 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos > start {
            let token = std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| IoError::parse(path, "non-UTF8 header token"))?;
            tokens.push(token.to_string());
        }
    }
    if tokens.len() != 3 {
        return Err(IoError::parse(path, "incomplete PGM header"));
    }
    let width: u32 = tokens[0]
        .parse()
        .map_err(|_| IoError::parse(path, format!("bad width `{}`", tokens[0])))?;
    let height: u32 = tokens[1]
        .parse()
        .map_err(|_| IoError::parse(path, format!("bad height `{}`", tokens[1])))?;
    let maxval: u32 = tokens[2]
        .parse()
        .map_err(|_| IoError::parse(path, format!("bad maxval `{}`", tokens[2])))?;
    if maxval == 0 || maxval > 255 {
        return Err(IoError::parse(
            path,
            format!("maxval {maxval} outside the single-byte range"),
        ));
    }
    pos += 1; // single whitespace byte between header and data
    let expected = (width * height) as usize;
    if bytes.len() < pos + expected {
        return Err(IoError::parse(
            path,
            format!(
                "expected {expected} pixel bytes, found {}",
                bytes.len().saturating_sub(pos)
            ),
        ));
    }
    Ok((width, height, bytes[pos..pos + expected].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        let data: Vec<u8> = (0..64u32 * 48).map(|i| (i % 7) as u8).collect();
        write_pgm(&path, 64, 48, &data).unwrap();
        let (w, h, back) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (64, 48));
        assert_eq!(back, data);
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# produced by hand\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        std::fs::write(&path, bytes).unwrap();
        let (w, h, data) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(data, vec![1, 2, 3, 4]);
    }

    #[test]
    fn truncated_data_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\nab").unwrap();
        assert!(matches!(read_pgm(&path), Err(IoError::Parse { .. })));
    }
}
