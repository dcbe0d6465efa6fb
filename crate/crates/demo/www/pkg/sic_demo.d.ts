/* tslint:disable */
/* eslint-disable */

/**
 * Concatenated traces, `2 * segment_symbols` values per algorithm in
 * [`compare_algorithms`] order.
 */
export function compare(seed: number, segment_symbols: number, sc_qam_order: number): Float64Array;

/**
 * Comma-separated ids of the traces returned by [`compare`].
 */
export function compare_algorithms(): string;

export function correlation(waveform_name: string, basis: string, samples: number, seed: number): Float64Array;

/**
 * `[amp_in..., amp_out..., phase_deg...]`.
 */
export function pa_response(points: number, max_amplitude: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly compare: (a: number, b: number, c: number) => [number, number, number, number];
    readonly compare_algorithms: () => [number, number];
    readonly correlation: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly pa_response: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
