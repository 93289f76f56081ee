/* tslint:disable */
/* eslint-disable */

export class HosvdDemo {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly bytes: bigint;
    readonly original: Float64Array;
    readonly ranks: Uint32Array;
    readonly rawBytes: bigint;
    readonly reconstructed: Float64Array;
    readonly relativeError: number;
}

export class QuantDemo {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly codes: Int8Array;
    readonly dequantized: Float64Array;
    readonly maxError: number;
    readonly scale: number;
    readonly zeroPoint: number;
}

/**
 * Compresses a smooth `8 × 32 × 32` frame sequence at `ratio`.
 */
export function compressFrames(ratio: number, smoothness: number, seed: bigint): HosvdDemo;

/**
 * Affine INT8 round trip of `values`.
 */
export function quantizeValues(values: Float64Array): QuantDemo;

/**
 * Indices of `k` diverse points, by exact k-DPP sampling or greedy MAP.
 */
export function selectPoints(xs: Float64Array, ys: Float64Array, k: number, greedy: boolean, seed: bigint): Uint32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_hosvddemo_free: (a: number, b: number) => void;
    readonly __wbg_quantdemo_free: (a: number, b: number) => void;
    readonly compressFrames: (a: number, b: number, c: bigint) => [number, number, number];
    readonly hosvddemo_bytes: (a: number) => bigint;
    readonly hosvddemo_original: (a: number) => [number, number];
    readonly hosvddemo_ranks: (a: number) => [number, number];
    readonly hosvddemo_rawBytes: (a: number) => bigint;
    readonly hosvddemo_reconstructed: (a: number) => [number, number];
    readonly hosvddemo_relativeError: (a: number) => number;
    readonly quantdemo_codes: (a: number) => [number, number];
    readonly quantdemo_dequantized: (a: number) => [number, number];
    readonly quantdemo_maxError: (a: number) => number;
    readonly quantdemo_scale: (a: number) => number;
    readonly quantdemo_zeroPoint: (a: number) => number;
    readonly quantizeValues: (a: number, b: number) => [number, number, number];
    readonly selectPoints: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
