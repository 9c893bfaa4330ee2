// Construction and queries touch the node, edge and token arrays at random.
// Past a few hundred megabytes, TLB misses dominate, so the big arrays ask
// for transparent huge pages where the kernel offers them on request.

const HUGE_PAGE: usize = 2 << 20;

/// Hints that `v`'s buffer should be backed by huge pages. Only page-aligned
/// interior parts of buffers larger than one huge page are affected.
pub(crate) fn advise_huge<T>(v: &[T]) {
    let bytes = std::mem::size_of_val(v);
    if bytes < HUGE_PAGE {
        return;
    }
    hint(v.as_ptr() as usize, bytes);
}

/// Pushes onto `v`, re-issuing the hint whenever the buffer moves.
#[inline]
pub(crate) fn push<T>(v: &mut Vec<T>, value: T) {
    if v.len() == v.capacity() {
        v.reserve(v.capacity().max(16));
        hint(v.as_ptr() as usize, v.capacity() * std::mem::size_of::<T>());
    }
    v.push(value);
}

#[cfg(target_os = "linux")]
fn hint(start: usize, bytes: usize) {
    const PAGE: usize = 4096;
    if bytes < HUGE_PAGE {
        return;
    }
    let lo = (start + PAGE - 1) & !(PAGE - 1);
    let hi = (start + bytes) & !(PAGE - 1);
    if hi > lo {
        // SAFETY: the range lies inside a live allocation and MADV_HUGEPAGE
        // only changes how it is backed, never its contents.
        unsafe {
            libc::madvise(lo as *mut libc::c_void, hi - lo, libc::MADV_HUGEPAGE);
        }
    }
}

#[cfg(not(target_os = "linux"))]
fn hint(_start: usize, _bytes: usize) {}

/// Reserves the full capacity up front so one hint covers the buffer.
pub(crate) fn with_capacity<T>(capacity: usize) -> Vec<T> {
    let v = Vec::with_capacity(capacity);
    hint(v.as_ptr() as usize, v.capacity() * std::mem::size_of::<T>());
    v
}
