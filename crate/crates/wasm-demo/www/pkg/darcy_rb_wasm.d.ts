/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    evaluate(k1: number, k2: number): Float64Array;
    hf_compare(k1: number, k2: number): Float64Array;
    /**
     * Runs the offline stage; takes a few seconds.
     */
    constructor();
    pressure_slice(k1: number, k2: number, layer: number, step: number): Float64Array;
    /**
     * `[κ1_min, κ1_max, κ2_min, κ2_max]`.
     */
    ranges(): Float64Array;
    /**
     * `[nx, ny, nz, n_steps, n_hf, n_pr, n_du, eim_terms]`.
     */
    sizes(): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_evaluate: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_hf_compare: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: () => [number, number, number];
    readonly demo_pressure_slice: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_ranges: (a: number) => [number, number];
    readonly demo_sizes: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
