//! Volume ingestion, intensity standardization, slice packing and
//! reassembly.

pub mod normalize;
pub mod png_io;
pub mod rawvol;
pub mod slices;
pub mod volume;

pub use normalize::{
    compute_norm_stats, normalize_value, normalize_volume, NormalizationStats, CENTER, UPPER_RAIL,
};
pub use png_io::{
    list_slice_files, mask_file_name, read_mask, read_slice, read_slice_image, read_subject_slices,
    slice_file_name, write_mask, write_slice, write_slice_image, SliceFiles,
};
pub use rawvol::{
    list_subjects, load_label_volume, load_raw_volume, load_subject, read_raw_volume,
    save_label_volume, save_raw_volume, save_subject, subject_volume_path, write_raw_volume,
    RawVolume, LABEL_MODALITY, RAW_MAGIC,
};
pub use slices::{
    normalize_stack, reconstruct_volume, stack_slices, validate_label_plane, volume_to_slices,
    NormalizedStack, SliceSample, SLICE_CHANNELS,
};
pub use volume::{
    class_to_label, invalid_labels, label_to_class, Modality, Volume, VolumeStack, LABEL_VALUES,
};
