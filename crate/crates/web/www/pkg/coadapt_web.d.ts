/* tslint:disable */
/* eslint-disable */

/**
 * One interactive trial: feed it cursor positions at the display's sample
 * rate and draw what it returns.
 */
export class Trial {
    free(): void;
    [Symbol.dispose](): void;
    constructor(version: string, mode: string, alpha: number, symmetry: Float64Array);
    /**
     * The trial so far as an upload-ready record.
     */
    record_json(participant_key: string): string;
    tick(px: number, py: number, width: number, height: number): string;
    readonly done: boolean;
    readonly sample_hz: number;
}

export function equilibria(version: string): string;

export function simulate(version: string, alpha: number, eta: number, sigma: number, steps: number, seed: bigint, points: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_trial_free: (a: number, b: number) => void;
    readonly equilibria: (a: number, b: number) => [number, number, number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint, h: number) => [number, number, number, number];
    readonly trial_done: (a: number) => number;
    readonly trial_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly trial_record_json: (a: number, b: number, c: number) => [number, number];
    readonly trial_sample_hz: (a: number) => number;
    readonly trial_tick: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
