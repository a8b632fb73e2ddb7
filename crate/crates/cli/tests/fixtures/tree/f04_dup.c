/* same carried loop as f01, different layout */
void f04(int n, double *a, double *b)
{
    int i;
#pragma omp parallel for
    for (i = 0; i < n; i++) a[i] = 3.0;
    for (i = 1;
         i < n; i++)   /* carried */
        a[i] = a[i - 1] + b[i];
}
