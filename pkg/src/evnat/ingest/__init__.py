"""Readers and writers for every external data format."""

from evnat.ingest.aedat import DVS128, AddressLayout, parse_aedat, read_aedat_file, write_aedat, write_aedat_file
from evnat.ingest.cifar import parse_cifar10_arrays, parse_cifar10_batch, write_cifar10_batch
from evnat.ingest.paired import load_paired_dataset, write_pair
from evnat.ingest.pnm import read_pnm, read_pnm_file, write_pnm, write_pnm_file
from evnat.ingest.types import Event, EventStream, ImageBuffer, PairedSample, Polarity, StorageKind

__all__ = [
    "AddressLayout", "DVS128", "Event", "EventStream", "ImageBuffer", "PairedSample",
    "Polarity", "StorageKind", "load_paired_dataset", "parse_aedat", "parse_cifar10_arrays",
    "parse_cifar10_batch", "read_aedat_file", "read_pnm", "read_pnm_file", "write_aedat",
    "write_aedat_file", "write_cifar10_batch", "write_pair", "write_pnm", "write_pnm_file",
]
