import { PredictionResult, reportUrl } from './api';

// Renders the diagnosis panel. Label, confidence, band, and version come
// straight from the server response.

export function renderResult(container: HTMLElement, result: PredictionResult): void {
    const isAnemic = result.label === 'anemic';
    const labelText = isAnemic ? 'Anemic' : 'Non-Anemic';
    const percent = (result.confidence * 100).toFixed(1);

    container.innerHTML = '';
    const panel = document.createElement('div');
    panel.className = `result-panel ${isAnemic ? 'result-anemic' : 'result-healthy'}`;

    const heading = document.createElement('div');
    heading.className = 'result-heading';
    heading.textContent = 'DIAGNOSIS';
    panel.appendChild(heading);

    const label = document.createElement('div');
    label.className = 'result-label';
    label.textContent = labelText;
    panel.appendChild(label);

    const confidence = document.createElement('div');
    confidence.className = 'result-confidence';
    confidence.textContent = `Confidence: ${percent}%`;
    panel.appendChild(confidence);

    const gaugeTrack = document.createElement('div');
    gaugeTrack.className = 'gauge-track';
    const gaugeFill = document.createElement('div');
    gaugeFill.className = 'gauge-fill';
    gaugeFill.style.width = `${percent}%`;
    gaugeTrack.appendChild(gaugeFill);
    panel.appendChild(gaugeTrack);

    const band = document.createElement('div');
    band.className = 'result-band';
    band.textContent = result.hgb_band;
    panel.appendChild(band);

    const link = document.createElement('a');
    link.className = 'pdf-link';
    link.href = reportUrl(result.screening_id);
    link.textContent = 'Download PDF Report';
    link.setAttribute('download', '');
    panel.appendChild(link);

    const version = document.createElement('div');
    version.className = 'result-version';
    version.textContent = `model ${result.model_version} · ${result.latency_ms.toFixed(0)} ms`;
    panel.appendChild(version);

    container.appendChild(panel);
}

export function renderError(container: HTMLElement, message: string, onRetry?: () => void): void {
    container.innerHTML = '';
    const banner = document.createElement('div');
    banner.className = 'error-banner';
    banner.setAttribute('role', 'alert');
    banner.textContent = message;
    if (onRetry) {
        const retry = document.createElement('button');
        retry.className = 'retry-button';
        retry.textContent = 'Retry';
        retry.addEventListener('click', onRetry);
        banner.appendChild(retry);
    }
    container.appendChild(banner);
}
