/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_hosvddemo_free: (a: number, b: number) => void;
export const __wbg_quantdemo_free: (a: number, b: number) => void;
export const compressFrames: (a: number, b: number, c: bigint) => [number, number, number];
export const hosvddemo_bytes: (a: number) => bigint;
export const hosvddemo_original: (a: number) => [number, number];
export const hosvddemo_ranks: (a: number) => [number, number];
export const hosvddemo_rawBytes: (a: number) => bigint;
export const hosvddemo_reconstructed: (a: number) => [number, number];
export const hosvddemo_relativeError: (a: number) => number;
export const quantdemo_codes: (a: number) => [number, number];
export const quantdemo_dequantized: (a: number) => [number, number];
export const quantdemo_maxError: (a: number) => number;
export const quantdemo_scale: (a: number) => number;
export const quantdemo_zeroPoint: (a: number) => number;
export const quantizeValues: (a: number, b: number) => [number, number, number];
export const selectPoints: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
