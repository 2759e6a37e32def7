/* tslint:disable */
/* eslint-disable */

/**
 * Simulates a dataset and fits it; see [`demo::cluster`].
 */
export function cluster_demo(seed: number, n: number, k: number, iterations: number, particles: number): string;

/**
 * Crossover strategy on `prices` (one number per line) or, when blank, on
 * a simulated path; see [`demo::crossover`].
 */
export function crossover_demo(prices: string, seed: number, alpha_fast: number, alpha_slow: number, vol_decay: number): string;

/**
 * Adaptive against every-step systematic resampling; see [`demo::degeneracy`].
 */
export function degeneracy_demo(seed: number, n: number, particles: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly cluster_demo: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly crossover_demo: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly degeneracy_demo: (a: number, b: number, c: number) => [number, number, number, number];
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
