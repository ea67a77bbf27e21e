// Typed client for the screening service JSON API. Every clinical value the
// UI shows comes from these responses; nothing is computed client-side.

export interface PredictionResult {
    screening_id: number;
    label: 'anemic' | 'non_anemic';
    confidence: number;
    hgb_band: string;
    model_version: string;
    latency_ms: number;
    disclaimer: string;
}

export interface HistoryItem {
    id: number;
    patient_id: number;
    patient_name: string;
    sex: string;
    timestamp: string;
    label: string;
    confidence: number;
    hgb_band: string;
    model_version: string;
}

export interface HistoryPage {
    total: number;
    items: HistoryItem[];
}

export class ApiError extends Error {
    status: number;

    constructor(status: number, message: string) {
        super(message);
        this.status = status;
    }
}

export function reportUrl(screeningId: number): string {
    return `/api/reports/${screeningId}.pdf`;
}

export function predict(
    file: File,
    patientName: string,
    sex: string,
    onProgress?: (fraction: number) => void,
): Promise<PredictionResult> {
    const form = new FormData();
    form.append('image', file);
    form.append('patient_name', patientName);
    form.append('sex', sex);

    return new Promise((resolve, reject) => {
        const xhr = new XMLHttpRequest();
        xhr.open('POST', '/api/predict');
        if (xhr.upload && onProgress) {
            xhr.upload.onprogress = (e: ProgressEvent) => {
                if (e.lengthComputable) onProgress(e.loaded / e.total);
            };
        }
        xhr.onload = () => {
            if (xhr.status >= 200 && xhr.status < 300) {
                resolve(JSON.parse(xhr.responseText) as PredictionResult);
            } else {
                let detail = `request failed (${xhr.status})`;
                try {
                    detail = JSON.parse(xhr.responseText).detail ?? detail;
                } catch {
                    /* non-JSON error body */
                }
                reject(new ApiError(xhr.status, detail));
            }
        };
        xhr.onerror = () => reject(new ApiError(0, 'network failure'));
        xhr.send(form);
    });
}

export async function fetchHistory(
    patientFilter: string,
    page: number,
    pageSize: number,
    signal?: AbortSignal,
): Promise<HistoryPage> {
    const params = new URLSearchParams({
        patient: patientFilter,
        page: String(page),
        page_size: String(pageSize),
    });
    const resp = await fetch(`/api/history?${params}`, { signal });
    if (!resp.ok) throw new ApiError(resp.status, `history request failed (${resp.status})`);
    return (await resp.json()) as HistoryPage;
}
