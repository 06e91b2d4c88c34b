/**
 * Reconstruction confidence between two consecutive frames of a sprite video.
 */
export class ConfidenceDemo {
    static __wrap(ptr) {
        const obj = Object.create(ConfidenceDemo.prototype);
        obj.__wbg_ptr = ptr;
        ConfidenceDemoFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        ConfidenceDemoFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_confidencedemo_free(ptr, 0);
    }
    /**
     * @returns {Picture}
     */
    get confidence() {
        const ret = wasm.confidencedemo_confidence(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
    /**
     * @returns {Picture}
     */
    get current() {
        const ret = wasm.confidencedemo_current(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
    /**
     * @returns {number}
     */
    get mean_confidence() {
        const ret = wasm.confidencedemo_mean_confidence(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get mean_residual() {
        const ret = wasm.confidencedemo_mean_residual(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {Picture}
     */
    get previous() {
        const ret = wasm.confidencedemo_previous(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
}
if (Symbol.dispose) ConfidenceDemo.prototype[Symbol.dispose] = ConfidenceDemo.prototype.free;

/**
 * Textured image translated by a constant, possibly fractional, shift.
 */
export class FlowDemo {
    static __wrap(ptr) {
        const obj = Object.create(FlowDemo.prototype);
        obj.__wbg_ptr = ptr;
        FlowDemoFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        FlowDemoFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_flowdemo_free(ptr, 0);
    }
    /**
     * @returns {Picture}
     */
    get flow() {
        const ret = wasm.flowdemo_flow(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
    /**
     * @returns {number}
     */
    get mean_dx() {
        const ret = wasm.flowdemo_mean_dx(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get mean_dy() {
        const ret = wasm.flowdemo_mean_dy(this.__wbg_ptr);
        return ret;
    }
    /**
     * Mean endpoint error against the true shift, over the interior.
     * @returns {number}
     */
    get mean_epe() {
        const ret = wasm.flowdemo_mean_epe(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {Picture}
     */
    get source() {
        const ret = wasm.flowdemo_source(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
    /**
     * @returns {Picture}
     */
    get target() {
        const ret = wasm.flowdemo_target(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
}
if (Symbol.dispose) FlowDemo.prototype[Symbol.dispose] = FlowDemo.prototype.free;

/**
 * An RGBA8 raster.
 */
export class Picture {
    static __wrap(ptr) {
        const obj = Object.create(Picture.prototype);
        obj.__wbg_ptr = ptr;
        PictureFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        PictureFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_picture_free(ptr, 0);
    }
    /**
     * @returns {number}
     */
    get height() {
        const ret = wasm.picture_height(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * Row-major RGBA bytes, four per pixel.
     * @returns {Uint8Array}
     */
    get rgba() {
        const ret = wasm.picture_rgba(this.__wbg_ptr);
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * @returns {number}
     */
    get width() {
        const ret = wasm.picture_width(this.__wbg_ptr);
        return ret >>> 0;
    }
}
if (Symbol.dispose) Picture.prototype[Symbol.dispose] = Picture.prototype.free;

/**
 * Rough and fused parses of the last frame of a held-out video.
 */
export class PropagationDemo {
    static __wrap(ptr) {
        const obj = Object.create(PropagationDemo.prototype);
        obj.__wbg_ptr = ptr;
        PropagationDemoFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        PropagationDemoFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_propagationdemo_free(ptr, 0);
    }
    /**
     * @returns {Picture}
     */
    get frame() {
        const ret = wasm.propagationdemo_frame(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
    /**
     * @returns {Picture}
     */
    get fused() {
        const ret = wasm.propagationdemo_fused(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
    /**
     * @returns {number}
     */
    get fused_f1() {
        const ret = wasm.propagationdemo_fused_f1(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {Picture}
     */
    get rough() {
        const ret = wasm.propagationdemo_rough(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
    /**
     * Average F1 of the rough maps over every frame of the held-out video.
     * @returns {number}
     */
    get rough_f1() {
        const ret = wasm.propagationdemo_rough_f1(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {Picture}
     */
    get truth() {
        const ret = wasm.propagationdemo_truth(this.__wbg_ptr);
        return Picture.__wrap(ret);
    }
}
if (Symbol.dispose) PropagationDemo.prototype[Symbol.dispose] = PropagationDemo.prototype.free;

/**
 * @param {number} seed
 * @param {number} noise_sigma
 * @param {boolean} subpixel
 * @returns {ConfidenceDemo}
 */
export function confidenceDemo(seed, noise_sigma, subpixel) {
    const ret = wasm.confidenceDemo(seed, noise_sigma, subpixel);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return ConfidenceDemo.__wrap(ret[0]);
}

/**
 * @param {number} dx
 * @param {number} dy
 * @param {number} seed
 * @returns {FlowDemo}
 */
export function flowDemo(dx, dy, seed) {
    const ret = wasm.flowDemo(dx, dy, seed);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return FlowDemo.__wrap(ret[0]);
}

/**
 * @param {number} seed
 * @param {number} error_rate
 * @param {string} variant
 * @returns {PropagationDemo}
 */
export function propagationDemo(seed, error_rate, variant) {
    const ptr0 = passStringToWasm0(variant, wasm.__wbindgen_malloc, wasm.__wbindgen_realloc);
    const len0 = WASM_VECTOR_LEN;
    const ret = wasm.propagationDemo(seed, error_rate, ptr0, len0);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return PropagationDemo.__wrap(ret[0]);
}
function __wbg_get_imports() {
    const import0 = {
        __proto__: null,
        __wbg_Error_30c8987f7c2ed4e2: function(arg0, arg1) {
            const ret = Error(getStringFromWasm0(arg0, arg1));
            return ret;
        },
        __wbg___wbindgen_throw_41e9ee4f547fc59a: function(arg0, arg1) {
            throw new Error(getStringFromWasm0(arg0, arg1));
        },
        __wbindgen_init_externref_table: function() {
            const table = wasm.__wbindgen_externrefs;
            const offset = table.grow(4);
            table.set(0, undefined);
            table.set(offset + 0, undefined);
            table.set(offset + 1, null);
            table.set(offset + 2, true);
            table.set(offset + 3, false);
        },
    };
    return {
        __proto__: null,
        "./labelprop_demo_bg.js": import0,
    };
}

const ConfidenceDemoFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_confidencedemo_free(ptr, 1));
const FlowDemoFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_flowdemo_free(ptr, 1));
const PictureFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_picture_free(ptr, 1));
const PropagationDemoFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_propagationdemo_free(ptr, 1));

function getArrayU8FromWasm0(ptr, len) {
    ptr = ptr >>> 0;
    return getUint8ArrayMemory0().subarray(ptr / 1, ptr / 1 + len);
}

function getStringFromWasm0(ptr, len) {
    return decodeText(ptr >>> 0, len);
}

let cachedUint8ArrayMemory0 = null;
function getUint8ArrayMemory0() {
    if (cachedUint8ArrayMemory0 === null || cachedUint8ArrayMemory0.byteLength === 0) {
        cachedUint8ArrayMemory0 = new Uint8Array(wasm.memory.buffer);
    }
    return cachedUint8ArrayMemory0;
}

function passStringToWasm0(arg, malloc, realloc) {
    if (realloc === undefined) {
        const buf = cachedTextEncoder.encode(arg);
        const ptr = malloc(buf.length, 1) >>> 0;
        getUint8ArrayMemory0().subarray(ptr, ptr + buf.length).set(buf);
        WASM_VECTOR_LEN = buf.length;
        return ptr;
    }

    let len = arg.length;
    let ptr = malloc(len, 1) >>> 0;

    const mem = getUint8ArrayMemory0();

    let offset = 0;

    for (; offset < len; offset++) {
        const code = arg.charCodeAt(offset);
        if (code > 0x7F) break;
        mem[ptr + offset] = code;
    }
    if (offset !== len) {
        if (offset !== 0) {
            arg = arg.slice(offset);
        }
        ptr = realloc(ptr, len, len = offset + arg.length * 3, 1) >>> 0;
        const view = getUint8ArrayMemory0().subarray(ptr + offset, ptr + len);
        const ret = cachedTextEncoder.encodeInto(arg, view);

        offset += ret.written;
        ptr = realloc(ptr, len, offset, 1) >>> 0;
    }

    WASM_VECTOR_LEN = offset;
    return ptr;
}

function takeFromExternrefTable0(idx) {
    const value = wasm.__wbindgen_externrefs.get(idx);
    wasm.__externref_table_dealloc(idx);
    return value;
}

let cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
cachedTextDecoder.decode();
const MAX_SAFARI_DECODE_BYTES = 2146435072;
let numBytesDecoded = 0;
function decodeText(ptr, len) {
    numBytesDecoded += len;
    if (numBytesDecoded >= MAX_SAFARI_DECODE_BYTES) {
        cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
        cachedTextDecoder.decode();
        numBytesDecoded = len;
    }
    return cachedTextDecoder.decode(getUint8ArrayMemory0().subarray(ptr, ptr + len));
}

const cachedTextEncoder = new TextEncoder();

if (!('encodeInto' in cachedTextEncoder)) {
    cachedTextEncoder.encodeInto = function (arg, view) {
        const buf = cachedTextEncoder.encode(arg);
        view.set(buf);
        return {
            read: arg.length,
            written: buf.length
        };
    };
}

let WASM_VECTOR_LEN = 0;

let wasmModule, wasmInstance, wasm;
function __wbg_finalize_init(instance, module) {
    wasmInstance = instance;
    wasm = instance.exports;
    wasmModule = module;
    cachedUint8ArrayMemory0 = null;
    wasm.__wbindgen_start();
    return wasm;
}

async function __wbg_load(module, imports) {
    if (typeof Response === 'function' && module instanceof Response) {
        if (!module.ok) {
            throw new Error(`failed to fetch Wasm: ${module.status} ${module.statusText} fetching '${module.url}'`);
        }

        if (typeof WebAssembly.instantiateStreaming === 'function') {
            try {
                return await WebAssembly.instantiateStreaming(module, imports);
            } catch (e) {
                const validResponse = expectedResponseType(module.type);

                if (validResponse && module.headers.get('Content-Type') !== 'application/wasm') {
                    console.warn("`WebAssembly.instantiateStreaming` failed because your server does not serve Wasm with `application/wasm` MIME type. Falling back to `WebAssembly.instantiate` which is slower. Original error:\n", e);

                } else { throw e; }
            }
        }

        const bytes = await module.arrayBuffer();
        return await WebAssembly.instantiate(bytes, imports);
    } else {
        const instance = await WebAssembly.instantiate(module, imports);

        if (instance instanceof WebAssembly.Instance) {
            return { instance, module };
        } else {
            return instance;
        }
    }

    function expectedResponseType(type) {
        switch (type) {
            case 'basic': case 'cors': case 'default': return true;
        }
        return false;
    }
}

function initSync(module) {
    if (wasm !== undefined) return wasm;


    if (module !== undefined) {
        if (Object.getPrototypeOf(module) === Object.prototype) {
            ({module} = module)
        } else {
            console.warn('using deprecated parameters for `initSync()`; pass a single object instead')
        }
    }

    const imports = __wbg_get_imports();
    if (!(module instanceof WebAssembly.Module)) {
        module = new WebAssembly.Module(module);
    }
    const instance = new WebAssembly.Instance(module, imports);
    return __wbg_finalize_init(instance, module);
}

async function __wbg_init(module_or_path) {
    if (wasm !== undefined) return wasm;


    if (module_or_path !== undefined) {
        if (Object.getPrototypeOf(module_or_path) === Object.prototype) {
            ({module_or_path} = module_or_path)
        } else {
            console.warn('using deprecated parameters for the initialization function; pass a single object instead')
        }
    }

    if (module_or_path === undefined) {
        module_or_path = new URL('labelprop_demo_bg.wasm', import.meta.url);
    }
    const imports = __wbg_get_imports();

    if (typeof module_or_path === 'string' || (typeof Request === 'function' && module_or_path instanceof Request) || (typeof URL === 'function' && module_or_path instanceof URL)) {
        module_or_path = fetch(module_or_path);
    }

    const { instance, module } = await __wbg_load(await module_or_path, imports);

    return __wbg_finalize_init(instance, module);
}

export { initSync, __wbg_init as default };
