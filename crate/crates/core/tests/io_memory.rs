//! Verifies the reader's memory ceiling: reading a year event table may
//! transiently allocate at most the returned table itself plus the header,
//! one trial's worth of events, and a fixed scratch buffer. A reader that
//! slurped the file into an intermediate buffer would double the peak and
//! fail here.
//!
//! Lives in its own test binary because the counting allocator is global.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use aggrisk::datagen::{generate_yet, GenSpec};
use aggrisk::io::{read_yet, write_yet, YET_HEADER_BYTES};
use aggrisk::model::TrialEvent;

struct CountingAlloc;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

fn on_alloc(bytes: usize) {
    let now = CURRENT.fetch_add(bytes, Ordering::Relaxed) + bytes;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc(layout) };
        if !ptr.is_null() {
            on_alloc(layout.size());
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let new_ptr = unsafe { System.realloc(ptr, layout, new_size) };
        if !new_ptr.is_null() {
            if new_size >= layout.size() {
                on_alloc(new_size - layout.size());
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        new_ptr
    }
}

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

/// Bytes retained by the parsed table, counting vector capacities.
fn retained_bytes(yet: &aggrisk::model::YearEventTable) -> usize {
    let trial_size = std::mem::size_of::<aggrisk::model::Trial>();
    yet.trials.capacity() * trial_size
        + yet
            .trials
            .iter()
            .map(|t| t.events.capacity() * std::mem::size_of::<TrialEvent>())
            .sum::<usize>()
}

#[test]
fn read_yet_peak_is_bounded_by_result_plus_fixed_buffer() {
    let spec = GenSpec::desk_shape(7);
    let yet = generate_yet(&spec).unwrap();
    let mut file = Vec::new();
    write_yet(&yet, &mut file).unwrap();
    let largest_trial_bytes = yet
        .trials
        .iter()
        .map(|t| t.events.len() * std::mem::size_of::<TrialEvent>())
        .max()
        .unwrap();
    drop(yet);

    // The streaming scratch buffer plus allocator slack.
    const FIXED_BUFFER: usize = 600 * 1024;

    let baseline = CURRENT.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let parsed = read_yet(&mut file.as_slice()).unwrap();
    let peak_delta = PEAK.load(Ordering::Relaxed) - baseline;

    let retained = retained_bytes(&parsed);
    let ceiling = retained + YET_HEADER_BYTES as usize + largest_trial_bytes + FIXED_BUFFER;
    assert!(
        peak_delta <= ceiling,
        "read_yet peaked at {peak_delta} bytes; ceiling is {ceiling} \
         (retained {retained} + largest trial {largest_trial_bytes} + fixed buffer)"
    );
    // The bound is meaningful only if it is far below file-slurp territory.
    assert!(
        ceiling < retained + file.len(),
        "ceiling {ceiling} would not catch a reader that buffers the file"
    );
    assert_eq!(parsed.trials.len() as u64, spec.num_trials);
}
